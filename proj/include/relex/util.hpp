#pragma once

#include <string>
#include <vector>

namespace relex {

// Lowest index wins ties, so prediction order is deterministic.
int argmax(const std::vector<double>& values);

std::vector<std::string> split(const std::string& s, char delim);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
std::string trim(const std::string& s);
std::string to_lower_ascii(const std::string& s);

// Locale-independent number formatting (snprintf "%.*f" / "%.*g").
std::string fmt_fixed(double value, int decimals);
std::string fmt_general(double value, int significant = 12);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace relex

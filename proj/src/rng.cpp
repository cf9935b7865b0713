#include "relex/rng.hpp"

#include <cmath>

namespace relex {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 must be strictly positive for the log.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::trunc_normal(double stddev) {
  double x = 0.0;
  do {
    x = normal();
  } while (std::fabs(x) > 2.0);
  return x * stddev;
}

}  // namespace relex

#include "relex/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relex/errors.hpp"

namespace relex {
namespace ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

#ifndef NDEBUG
void check_finite(const Tensor& t, const char* op) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) throw Error(std::string(op) + " produced a non-finite value");
  }
}
#else
void check_finite(const Tensor&, const char*) {}
#endif

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     t.shape_str());
  }
}

bool wants_grad(const Tape& tape, const Tensor& a) {
  return tape.recording() && a.requires_grad();
}

bool wants_grad(const Tape& tape, const Tensor& a, const Tensor& b) {
  return tape.recording() && (a.requires_grad() || b.requires_grad());
}

// Elementwise unary op with derivative expressed in terms of (x, y).
template <typename Fwd, typename Bwd>
Tensor unary(Tape& tape, const Tensor& a, const char* name, Fwd fwd, Bwd dydx) {
  const bool rec = wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.shape(), rec);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i]);
  check_finite(out, name);
  if (rec) {
    tape.record([a, out, dydx]() mutable {
      const std::size_t m = out.size();
      for (std::size_t i = 0; i < m; ++i) {
        a.grad()[i] += out.grad()[i] * dydx(a.data()[i], out.data()[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const bool rec = wants_grad(tape, a, b);
  Tensor out = Tensor::zeros(a.shape(), rec);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  check_finite(out, "add");
  if (rec) {
    tape.record([a, b, out]() mutable {
      const std::size_t m = out.size();
      if (a.requires_grad())
        for (std::size_t i = 0; i < m; ++i) a.grad()[i] += out.grad()[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < m; ++i) b.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const bool rec = wants_grad(tape, a, b);
  Tensor out = Tensor::zeros(a.shape(), rec);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  check_finite(out, "sub");
  if (rec) {
    tape.record([a, b, out]() mutable {
      const std::size_t m = out.size();
      if (a.requires_grad())
        for (std::size_t i = 0; i < m; ++i) a.grad()[i] += out.grad()[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < m; ++i) b.grad()[i] -= out.grad()[i];
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const bool rec = wants_grad(tape, a, b);
  Tensor out = Tensor::zeros(a.shape(), rec);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(out, "mul");
  if (rec) {
    tape.record([a, b, out]() mutable {
      const std::size_t m = out.size();
      if (a.requires_grad())
        for (std::size_t i = 0; i < m; ++i) a.grad()[i] += out.grad()[i] * b.data()[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < m; ++i) b.grad()[i] += out.grad()[i] * a.data()[i];
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  const bool rec = wants_grad(tape, a);
  Tensor out = Tensor::zeros(a.shape(), rec);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  check_finite(out, "scale");
  if (rec) {
    tape.record([a, out, c]() mutable {
      const std::size_t m = out.size();
      for (std::size_t i = 0; i < m; ++i) a.grad()[i] += out.grad()[i] * c;
    });
  }
  return out;
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(Tape& tape, const Tensor& a) {
  // Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
  return unary(
      tape, a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rec = wants_grad(tape, a, b);
  Tensor out = Tensor::zeros({m, n}, rec);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  check_finite(out, "matmul");
  if (rec) {
    tape.record([a, b, out, m, k, n]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        const double* pb2 = b.data().data();
        // dA[i,p] += sum_j g[i,j] B[p,j]
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb2 + p * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        double* gb = b.grad().data();
        const double* pa2 = a.data().data();
        // dB[p,j] += sum_i A[i,p] g[i,j]
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const double aip = pa2[i * k + p];
            if (aip == 0.0) continue;
            const double* grow = g + i * n;
            double* brow = gb + p * n;
            for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
      }
    });
  }
  return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: inner dimensions disagree, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  const bool rec = wants_grad(tape, a, b);
  Tensor out = Tensor::zeros({m, n}, rec);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* arow = pa + i * k;
      const double* brow = pb + j * k;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] = acc;
    }
  check_finite(out, "matmul_nt");
  if (rec) {
    tape.record([a, b, out, m, k, n]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        const double* pb2 = b.data().data();
        // dA[i,p] += sum_j g[i,j] B[j,p]
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            const double* brow = pb2 + j * k;
            double* arow = ga + i * k;
            for (int p = 0; p < k; ++p) arow[p] += gij * brow[p];
          }
      }
      if (b.requires_grad()) {
        double* gb = b.grad().data();
        const double* pa2 = a.data().data();
        // dB[j,p] += sum_i g[i,j] A[i,p]
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            const double* arow = pa2 + i * k;
            double* brow = gb + j * k;
            for (int p = 0; p < k; ++p) brow[p] += gij * arow[p];
          }
      }
    });
  }
  return out;
}

Tensor matvec(Tape& tape, const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "matvec");
  require_rank(v, 1, "matvec");
  if (a.dim(1) != v.dim(0)) {
    throw ShapeError("matvec: inner dimensions disagree, " + a.shape_str() + " vs " + v.shape_str());
  }
  const int m = a.dim(0), k = a.dim(1);
  const bool rec = wants_grad(tape, a, v);
  Tensor out = Tensor::zeros({m}, rec);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += a.at(i, p) * v.at(p);
    out.at(i) = acc;
  }
  check_finite(out, "matvec");
  if (rec) {
    tape.record([a, v, out, m, k]() mutable {
      if (a.requires_grad()) {
        for (int i = 0; i < m; ++i) {
          const double gi = out.grad()[static_cast<std::size_t>(i)];
          for (int p = 0; p < k; ++p) a.grad()[static_cast<std::size_t>(i) * k + p] += gi * v.at(p);
        }
      }
      if (v.requires_grad()) {
        for (int i = 0; i < m; ++i) {
          const double gi = out.grad()[static_cast<std::size_t>(i)];
          if (gi == 0.0) continue;
          for (int p = 0; p < k; ++p) v.grad()[static_cast<std::size_t>(p)] += gi * a.at(i, p);
        }
      }
    });
  }
  return out;
}

Tensor vecmat(Tape& tape, const Tensor& v, const Tensor& a) {
  require_rank(v, 1, "vecmat");
  require_rank(a, 2, "vecmat");
  if (v.dim(0) != a.dim(0)) {
    throw ShapeError("vecmat: inner dimensions disagree, " + v.shape_str() + " vs " + a.shape_str());
  }
  const int m = a.dim(0), k = a.dim(1);
  const bool rec = wants_grad(tape, v, a);
  Tensor out = Tensor::zeros({k}, rec);
  for (int i = 0; i < m; ++i) {
    const double vi = v.at(i);
    if (vi == 0.0) continue;
    for (int p = 0; p < k; ++p) out.at(p) += vi * a.at(i, p);
  }
  check_finite(out, "vecmat");
  if (rec) {
    tape.record([v, a, out, m, k]() mutable {
      if (v.requires_grad()) {
        for (int i = 0; i < m; ++i) {
          double acc = 0.0;
          for (int p = 0; p < k; ++p) acc += out.grad()[static_cast<std::size_t>(p)] * a.at(i, p);
          v.grad()[static_cast<std::size_t>(i)] += acc;
        }
      }
      if (a.requires_grad()) {
        for (int i = 0; i < m; ++i) {
          const double vi = v.at(i);
          if (vi == 0.0) continue;
          for (int p = 0; p < k; ++p)
            a.grad()[static_cast<std::size_t>(i) * k + p] += vi * out.grad()[static_cast<std::size_t>(p)];
        }
      }
    });
  }
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  if (x.dim(1) != bias.dim(0)) {
    throw ShapeError("add_bias: width mismatch, " + x.shape_str() + " vs " + bias.shape_str());
  }
  const int m = x.dim(0), n = x.dim(1);
  const bool rec = wants_grad(tape, x, bias);
  Tensor out = Tensor::zeros({m, n}, rec);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + bias.at(j);
  check_finite(out, "add_bias");
  if (rec) {
    tape.record([x, bias, out, m, n]() mutable {
      if (x.requires_grad()) {
        const std::size_t total = out.size();
        for (std::size_t i = 0; i < total; ++i) x.grad()[i] += out.grad()[i];
      }
      if (bias.requires_grad()) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            bias.grad()[static_cast<std::size_t>(j)] += out.grad()[static_cast<std::size_t>(i) * n + j];
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(x, 2, "layer_norm");
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  const int m = x.dim(0), n = x.dim(1);
  if (gain.dim(0) != n || bias.dim(0) != n) {
    throw ShapeError("layer_norm: gain/bias width must be " + std::to_string(n));
  }
  const bool rec = tape.recording() &&
                   (x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  Tensor out = Tensor::zeros({m, n}, rec);
  // Keep per-row mean and inverse stddev for the backward rule.
  auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m) * 2);
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<std::size_t>(i) * 2] = mu;
    (*stats)[static_cast<std::size_t>(i) * 2 + 1] = inv;
    for (int j = 0; j < n; ++j) {
      out.at(i, j) = (x.at(i, j) - mu) * inv * gain.at(j) + bias.at(j);
    }
  }
  check_finite(out, "layer_norm");
  if (rec) {
    tape.record([x, gain, bias, out, stats, m, n]() mutable {
      for (int i = 0; i < m; ++i) {
        const double mu = (*stats)[static_cast<std::size_t>(i) * 2];
        const double inv = (*stats)[static_cast<std::size_t>(i) * 2 + 1];
        double sum_gy = 0.0;     // sum_j gain_j dy_j
        double sum_gyx = 0.0;    // sum_j gain_j dy_j xhat_j
        for (int j = 0; j < n; ++j) {
          const double dy = out.grad()[static_cast<std::size_t>(i) * n + j];
          const double xhat = (x.at(i, j) - mu) * inv;
          sum_gy += gain.at(j) * dy;
          sum_gyx += gain.at(j) * dy * xhat;
          if (gain.requires_grad()) gain.grad()[static_cast<std::size_t>(j)] += dy * xhat;
          if (bias.requires_grad()) bias.grad()[static_cast<std::size_t>(j)] += dy;
        }
        if (x.requires_grad()) {
          for (int j = 0; j < n; ++j) {
            const double dy = out.grad()[static_cast<std::size_t>(i) * n + j];
            const double xhat = (x.at(i, j) - mu) * inv;
            x.grad()[static_cast<std::size_t>(i) * n + j] +=
                inv * (gain.at(j) * dy - sum_gy / n - xhat * sum_gyx / n);
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Shared softmax kernel over an index range with a validity predicate.
void softmax_row(const double* in, double* out, int n, const std::uint8_t* valid) {
  double mx = -1e300;
  int n_valid = 0;
  for (int j = 0; j < n; ++j) {
    if (valid && !valid[j]) continue;
    ++n_valid;
    mx = std::max(mx, in[j]);
  }
  if (n_valid == 0) throw InputError("masked_softmax: no valid positions");
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    if (valid && !valid[j]) {
      out[j] = 0.0;
    } else {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
  }
  for (int j = 0; j < n; ++j) out[j] /= z;
}

void softmax_row_backward(const double* y, const double* dy, double* dx, int n,
                          const std::uint8_t* valid) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    if (valid && !valid[j]) continue;
    s += dy[j] * y[j];
  }
  for (int j = 0; j < n; ++j) {
    if (valid && !valid[j]) continue;
    dx[j] += y[j] * (dy[j] - s);
  }
}

}  // namespace

Tensor masked_softmax(Tape& tape, const Tensor& logits, const Mask& valid) {
  require_rank(logits, 1, "masked_softmax");
  const int n = logits.dim(0);
  if (static_cast<int>(valid.size()) != n) {
    throw ShapeError("masked_softmax: mask length " + std::to_string(valid.size()) +
                     " does not match logits " + logits.shape_str());
  }
  const bool rec = wants_grad(tape, logits);
  Tensor out = Tensor::zeros({n}, rec);
  softmax_row(logits.data().data(), out.data().data(), n, valid.data());
  check_finite(out, "masked_softmax");
  if (rec) {
    tape.record([logits, out, valid, n]() mutable {
      softmax_row_backward(out.data().data(), out.grad().data(), logits.grad().data(), n,
                           valid.data());
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& logits) {
  require_rank(logits, 1, "softmax");
  return masked_softmax(tape, logits, Mask(static_cast<std::size_t>(logits.dim(0)), 1));
}

Tensor masked_softmax_rows(Tape& tape, const Tensor& scores, const Mask& key_valid) {
  require_rank(scores, 2, "masked_softmax_rows");
  const int m = scores.dim(0), n = scores.dim(1);
  if (static_cast<int>(key_valid.size()) != n) {
    throw ShapeError("masked_softmax_rows: mask length " + std::to_string(key_valid.size()) +
                     " does not match score width " + std::to_string(n));
  }
  const bool rec = wants_grad(tape, scores);
  Tensor out = Tensor::zeros({m, n}, rec);
  for (int i = 0; i < m; ++i) {
    softmax_row(scores.data().data() + static_cast<std::size_t>(i) * n,
                out.data().data() + static_cast<std::size_t>(i) * n, n, key_valid.data());
  }
  check_finite(out, "masked_softmax_rows");
  if (rec) {
    tape.record([scores, out, key_valid, m, n]() mutable {
      for (int i = 0; i < m; ++i) {
        softmax_row_backward(out.data().data() + static_cast<std::size_t>(i) * n,
                             out.grad().data() + static_cast<std::size_t>(i) * n,
                             scores.grad().data() + static_cast<std::size_t>(i) * n, n,
                             key_valid.data());
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& probabilities, int gold) {
  require_rank(probabilities, 1, "cross_entropy");
  const int c = probabilities.dim(0);
  if (gold < 0 || gold >= c) {
    throw InputError("cross_entropy: gold index " + std::to_string(gold) + " out of range [0," +
                     std::to_string(c) + ")");
  }
  const double p = probabilities.at(gold);
  const bool rec = wants_grad(tape, probabilities);
  Tensor out = Tensor::zeros({1}, rec);
  out.at(0) = -std::log(p);
  check_finite(out, "cross_entropy");
  if (rec) {
    tape.record([probabilities, out, gold]() mutable {
      probabilities.grad()[static_cast<std::size_t>(gold)] +=
          out.grad()[0] * (-1.0 / probabilities.at(gold));
    });
  }
  return out;
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
  require_rank(table, 2, "embedding_lookup");
  const int v = table.dim(0), h = table.dim(1);
  const int t = static_cast<int>(ids.size());
  if (t == 0) throw ShapeError("embedding_lookup: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw InputError("embedding_lookup: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(v) + ")");
    }
  }
  const bool rec = wants_grad(tape, table);
  Tensor out = Tensor::zeros({t, h}, rec);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < h; ++j) out.at(i, j) = table.at(ids[static_cast<std::size_t>(i)], j);
  check_finite(out, "embedding_lookup");
  if (rec) {
    tape.record([table, out, ids, t, h]() mutable {
      for (int i = 0; i < t; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        for (int j = 0; j < h; ++j)
          table.grad()[static_cast<std::size_t>(id) * h + j] +=
              out.grad()[static_cast<std::size_t>(i) * h + j];
      }
    });
  }
  return out;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  int total = 0;
  bool rec = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat: expects vectors, got " + p.shape_str());
    total += p.dim(0);
    rec = rec || wants_grad(tape, p);
  }
  Tensor out = Tensor::zeros({total}, rec);
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < p.dim(0); ++i) out.at(off + i) = p.at(i);
    off += p.dim(0);
  }
  if (rec) {
    tape.record([parts, out]() mutable {
      int off2 = 0;
      for (Tensor& p : parts) {
        if (p.requires_grad()) {
          for (int i = 0; i < p.dim(0); ++i)
            p.grad()[static_cast<std::size_t>(i)] += out.grad()[static_cast<std::size_t>(off2 + i)];
        }
        off2 += p.dim(0);
      }
    });
  }
  return out;
}

Tensor row(Tape& tape, const Tensor& x, int i) {
  require_rank(x, 2, "row");
  if (i < 0 || i >= x.dim(0)) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " + x.shape_str());
  }
  const int n = x.dim(1);
  const bool rec = wants_grad(tape, x);
  Tensor out = Tensor::zeros({n}, rec);
  for (int j = 0; j < n; ++j) out.at(j) = x.at(i, j);
  if (rec) {
    tape.record([x, out, i, n]() mutable {
      for (int j = 0; j < n; ++j)
        x.grad()[static_cast<std::size_t>(i) * n + j] += out.grad()[static_cast<std::size_t>(j)];
    });
  }
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, int begin, int end) {
  require_rank(x, 2, "slice_rows");
  if (begin < 0 || end > x.dim(0) || begin >= end) {
    throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") for " + x.shape_str());
  }
  const int m = end - begin, n = x.dim(1);
  const bool rec = wants_grad(tape, x);
  Tensor out = Tensor::zeros({m, n}, rec);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = x.at(begin + i, j);
  if (rec) {
    tape.record([x, out, begin, m, n]() mutable {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          x.grad()[static_cast<std::size_t>(begin + i) * n + j] +=
              out.grad()[static_cast<std::size_t>(i) * n + j];
    });
  }
  return out;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const int n = rows.front().dim(0);
  bool rec = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.dim(0) != n) {
      throw ShapeError("stack_rows: all rows must be vectors of length " + std::to_string(n));
    }
    rec = rec || wants_grad(tape, r);
  }
  const int m = static_cast<int>(rows.size());
  Tensor out = Tensor::zeros({m, n}, rec);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = rows[static_cast<std::size_t>(i)].at(j);
  if (rec) {
    tape.record([rows, out, m, n]() mutable {
      for (int i = 0; i < m; ++i) {
        Tensor& r = rows[static_cast<std::size_t>(i)];
        if (!r.requires_grad()) continue;
        for (int j = 0; j < n; ++j)
          r.grad()[static_cast<std::size_t>(j)] += out.grad()[static_cast<std::size_t>(i) * n + j];
      }
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int begin, int end) {
  require_rank(x, 2, "slice_cols");
  if (begin < 0 || end > x.dim(1) || begin >= end) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") for " + x.shape_str());
  }
  const int m = x.dim(0), n = end - begin, w = x.dim(1);
  const bool rec = wants_grad(tape, x);
  Tensor out = Tensor::zeros({m, n}, rec);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, begin + j);
  if (rec) {
    tape.record([x, out, begin, m, n, w]() mutable {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          x.grad()[static_cast<std::size_t>(i) * w + begin + j] +=
              out.grad()[static_cast<std::size_t>(i) * n + j];
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int m = parts.front().dim(0);
  int total = 0;
  bool rec = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) {
      throw ShapeError("concat_cols: all parts must have " + std::to_string(m) + " rows");
    }
    total += p.dim(1);
    rec = rec || wants_grad(tape, p);
  }
  Tensor out = Tensor::zeros({m, total}, rec);
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.dim(1); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.dim(1);
  }
  if (rec) {
    tape.record([parts, out, m, total]() mutable {
      int off2 = 0;
      for (Tensor& p : parts) {
        const int w = p.dim(1);
        if (p.requires_grad()) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              p.grad()[static_cast<std::size_t>(i) * w + j] +=
                  out.grad()[static_cast<std::size_t>(i) * total + off2 + j];
        }
        off2 += w;
      }
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  const double keep = 1.0 - rate;
  const double inv_keep = 1.0 / keep;
  const std::size_t n = x.size();
  auto mask = std::make_shared<std::vector<std::uint8_t>>(n);
  const bool rec = wants_grad(tape, x);
  Tensor out = Tensor::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep_it = rng.uniform() < keep;
    (*mask)[i] = keep_it ? 1 : 0;
    out.data()[i] = keep_it ? x.data()[i] * inv_keep : 0.0;
  }
  if (rec) {
    tape.record([x, out, mask, inv_keep, n]() mutable {
      for (std::size_t i = 0; i < n; ++i) {
        if ((*mask)[i]) x.grad()[i] += out.grad()[i] * inv_keep;
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  const bool rec = wants_grad(tape, x);
  Tensor out = Tensor::zeros({1}, rec);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.at(0) = acc;
  check_finite(out, "sum");
  if (rec) {
    tape.record([x, out]() mutable {
      const double g = out.grad()[0];
      for (double& gx : x.grad()) gx += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  Tensor s = sum(tape, x);
  return scale(tape, s, 1.0 / static_cast<double>(x.size()));
}

}  // namespace ops
}  // namespace relex

#include <doctest.h>

#include <cmath>
#include <vector>

#include "relex/adam.hpp"
#include "relex/errors.hpp"
#include "relex/finite_diff.hpp"
#include "relex/ops.hpp"
#include "relex/rng.hpp"
#include "relex/tape.hpp"
#include "relex/tensor.hpp"

using namespace relex;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = rng.uniform(-2.0, 2.0);
  return t;
}

}  // namespace

TEST_CASE("tensor basics and invariants") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);

  Tensor c = t.clone();
  c.at(0, 0) = 99.0;
  CHECK(t.at(0, 0) == 1.0);

  Tensor alias = t;
  alias.at(0, 0) = 42.0;
  CHECK(t.at(0, 0) == 42.0);
}

TEST_CASE("matmul identity and shape errors") {
  Tape tape;
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = ops::matmul(tape, eye, a);
  CHECK(out.data() == std::vector<double>{1, 2, 3, 4});

  Tensor bad = Tensor::zeros({3, 2});
  CHECK_THROWS_WITH_AS(static_cast<void>(ops::matmul(tape, a, bad)),
                       doctest::Contains("[2x2]"), ShapeError);
}

TEST_CASE("matmul gradient of sum(output) w.r.t. identity lhs") {
  Tape tape;
  Tensor a = Tensor::from_data({2, 2}, {1, 0, 0, 1}, true);
  Tensor b = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor s = ops::sum(tape, ops::matmul(tape, a, b));
  tape.backward(s);
  // d sum / dA = ones * B^T
  CHECK(a.grad()[0] == doctest::Approx(1 + 2));
  CHECK(a.grad()[1] == doctest::Approx(3 + 4));
  CHECK(a.grad()[2] == doctest::Approx(1 + 2));
  CHECK(a.grad()[3] == doctest::Approx(3 + 4));
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tape tape;
  Tensor loss = ops::sum(tape, ops::tanh(tape, ops::matmul(tape, a, b)));
  tape.backward(loss);

  auto loss_fn = [&]() {
    Tape t(false);
    return ops::sum(t, ops::tanh(t, ops::matmul(t, a, b))).item();
  };
  auto res = finite_difference_check(loss_fn, {{"a", a}, {"b", b}}, 1e-5, 1e-6);
  CHECK_MESSAGE(res.ok, "max rel err ", res.max_rel_err, " at ", res.worst_param);
}

TEST_CASE("masked_softmax examples") {
  Tape tape;
  SUBCASE("equal logits, all valid") {
    Tensor l = Tensor::from_data({3}, {0, 0, 0});
    Tensor y = ops::masked_softmax(tape, l, {1, 1, 1});
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("symmetry plus masking") {
    Tensor l = Tensor::from_data({3}, {5, 5, -1});
    Tensor y = ops::masked_softmax(tape, l, {1, 1, 0});
    CHECK(y.at(0) == doctest::Approx(0.5));
    CHECK(y.at(1) == doctest::Approx(0.5));
    CHECK(y.at(2) == 0.0);
  }
  SUBCASE("direct exp/normalize computation") {
    Tensor l = Tensor::from_data({3}, {1, 2, 3});
    Tensor y = ops::masked_softmax(tape, l, {1, 1, 1});
    CHECK(y.at(0) == doctest::Approx(0.0900).epsilon(1e-3));
    CHECK(y.at(1) == doctest::Approx(0.2447).epsilon(1e-3));
    CHECK(y.at(2) == doctest::Approx(0.6652).epsilon(1e-3));
  }
  SUBCASE("degenerate mask") {
    Tensor l = Tensor::from_data({2}, {1, 2});
    CHECK_THROWS_AS(static_cast<void>(ops::masked_softmax(tape, l, {0, 0})), InputError);
  }
}

TEST_CASE("masked_softmax properties on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(12));
    Tensor l = random_tensor({n}, rng, false);
    Mask valid(static_cast<std::size_t>(n), 0);
    int n_valid = 0;
    for (auto& v : valid) {
      v = rng.uniform() < 0.7 ? 1 : 0;
      n_valid += v;
    }
    if (n_valid == 0) valid[rng.index(static_cast<std::size_t>(n))] = 1;

    Tape tape;
    Tensor y = ops::masked_softmax(tape, l, valid);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (valid[static_cast<std::size_t>(i)]) {
        CHECK(y.at(i) > 0.0);
      } else {
        CHECK(y.at(i) == 0.0);
      }
      total += y.at(i);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-9);

    // invariance under adding a constant to all valid logits
    Tensor shifted = l.clone();
    for (int i = 0; i < n; ++i) shifted.at(i) += 3.25;
    Tensor y2 = ops::masked_softmax(tape, shifted, valid);
    for (int i = 0; i < n; ++i) CHECK(y2.at(i) == doctest::Approx(y.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("cross_entropy examples") {
  Tape tape;
  SUBCASE("perfect prediction") {
    Tensor p = Tensor::from_data({3}, {0, 1, 0});
    CHECK(ops::cross_entropy(tape, p, 1).item() == doctest::Approx(0.0));
  }
  SUBCASE("uniform over four classes") {
    Tensor p = Tensor::from_data({4}, {0.25, 0.25, 0.25, 0.25});
    CHECK(ops::cross_entropy(tape, p, 2).item() == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("minus log 0.7") {
    Tensor p = Tensor::from_data({3}, {0.7, 0.2, 0.1});
    CHECK(ops::cross_entropy(tape, p, 0).item() == doctest::Approx(0.35667).epsilon(1e-4));
  }
  SUBCASE("gold out of range") {
    Tensor p = Tensor::from_data({3}, {0.7, 0.2, 0.1});
    CHECK_THROWS_AS(static_cast<void>(ops::cross_entropy(tape, p, 3)), InputError);
    CHECK_THROWS_AS(static_cast<void>(ops::cross_entropy(tape, p, -1)), InputError);
  }
}

TEST_CASE("softmax + cross_entropy gradient equals p minus onehot") {
  Tensor logits = Tensor::from_data({4}, {0.3, -1.2, 2.0, 0.4}, true);
  Tape tape;
  Tensor p = ops::softmax(tape, logits);
  Tensor loss = ops::cross_entropy(tape, p, 2);
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) {
    const double expect = p.at(i) - (i == 2 ? 1.0 : 0.0);
    CHECK(logits.grad()[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(23);
  Tensor x = random_tensor({2, 5}, rng);
  Tensor y = random_tensor({2, 5}, rng);

  auto check = [&](auto forward, const char* what) {
    for (Tensor t : {x, y}) t.zero_grad();
    Tape tape;
    Tensor loss = forward(tape);
    tape.backward(loss);
    auto loss_fn = [&]() {
      Tape t(false);
      return forward(t).item();
    };
    auto res = finite_difference_check(loss_fn, {{"x", x}, {"y", y}}, 1e-5, 1e-4);
    CHECK_MESSAGE(res.ok, what, ": max rel err ", res.max_rel_err);
  };

  check([&](Tape& t) { return ops::sum(t, ops::mul(t, ops::tanh(t, x), ops::sigmoid(t, y))); },
        "tanh*sigmoid");
  check([&](Tape& t) { return ops::sum(t, ops::gelu(t, ops::add(t, x, y))); }, "gelu(add)");
  check([&](Tape& t) { return ops::mean(t, ops::sub(t, ops::scale(t, x, 1.7), y)); }, "scale/sub");
}

TEST_CASE("layer_norm gradients match finite differences") {
  Rng rng(31);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor gain = random_tensor({6}, rng);
  Tensor bias = random_tensor({6}, rng);
  Tape tape;
  Tensor loss = ops::sum(tape, ops::tanh(tape, ops::layer_norm(tape, x, gain, bias)));
  tape.backward(loss);
  auto loss_fn = [&]() {
    Tape t(false);
    return ops::sum(t, ops::tanh(t, ops::layer_norm(t, x, gain, bias))).item();
  };
  auto res =
      finite_difference_check(loss_fn, {{"x", x}, {"gain", gain}, {"bias", bias}}, 1e-5, 1e-4);
  CHECK_MESSAGE(res.ok, "layer_norm: max rel err ", res.max_rel_err, " at ", res.worst_param);
}

TEST_CASE("structural op gradients match finite differences") {
  Rng rng(43);
  Tensor m = random_tensor({4, 3}, rng);
  Tensor v = random_tensor({3}, rng);
  Tensor w = random_tensor({4}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor table = random_tensor({5, 3}, rng);
  std::vector<int> ids = {4, 0, 0, 2};

  auto forward = [&](Tape& t) {
    Tensor mv = ops::matvec(t, m, v);                       // [4]
    Tensor vm = ops::vecmat(t, w, m);                       // [3]
    Tensor nt = ops::matmul_nt(t, m, m);                    // [4x4]
    Tensor emb = ops::embedding_lookup(t, table, ids);      // [4x3]
    Tensor biased = ops::add_bias(t, emb, b);               // [4x3]
    Tensor r = ops::row(t, biased, 1);                      // [3]
    Tensor sl = ops::slice_rows(t, biased, 1, 3);           // [2x3]
    Tensor sc = ops::slice_cols(t, biased, 1, 3);           // [4x2]
    Tensor cc = ops::concat_cols(t, {sl, ops::slice_rows(t, biased, 0, 2)});
    Tensor st = ops::stack_rows(t, {r, vm, ops::row(t, biased, 0)});
    Tensor cat = ops::concat(t, {mv, vm, r});
    Tensor total = ops::sum(t, ops::tanh(t, cat));
    total = ops::add(t, total, ops::sum(t, ops::tanh(t, nt)));
    total = ops::add(t, total, ops::sum(t, ops::tanh(t, st)));
    total = ops::add(t, total, ops::sum(t, ops::tanh(t, cc)));
    total = ops::add(t, total, ops::sum(t, ops::tanh(t, sc)));
    return total;
  };

  Tape tape;
  Tensor loss = forward(tape);
  tape.backward(loss);
  auto loss_fn = [&]() {
    Tape t(false);
    return forward(t).item();
  };
  auto res = finite_difference_check(
      loss_fn, {{"m", m}, {"v", v}, {"w", w}, {"b", b}, {"table", table}}, 1e-5, 1e-4);
  CHECK_MESSAGE(res.ok, "structural: max rel err ", res.max_rel_err, " at ", res.worst_param);
}

TEST_CASE("fan-out accumulates once per use") {
  Tensor x = Tensor::from_data({1}, {1.5}, true);
  Tape tape;
  Tensor y = ops::add(tape, x, x);  // dy/dx = 2
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("each recorded rule runs exactly once per backward") {
  Tape tape;
  int calls = 0;
  Tensor x = Tensor::from_data({1}, {1.0}, true);
  Tensor y = ops::scale(tape, x, 2.0);
  tape.record([&calls]() { ++calls; });
  tape.backward(y);
  CHECK(calls == 1);
  Tensor z = y;
  CHECK_THROWS_AS(tape.backward(z), Error);  // one backward per tape
}

TEST_CASE("non-recording tape skips rules and backward") {
  Tape tape(false);
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tensor y = ops::tanh(tape, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(tape.num_ops() == 0);
}

TEST_CASE("dropout is seeded, replayable, and train-mode only") {
  Tensor x = Tensor::full({100}, 1.0, true);
  Rng rng1(5), rng2(5);
  Tape t1, t2;
  Tensor a = ops::dropout(t1, x, 0.5, rng1);
  Tensor b = ops::dropout(t2, x, 0.5, rng2);
  CHECK(a.data() == b.data());
  int zeros = 0;
  for (double v : a.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    zeros += v == 0.0;
  }
  CHECK(zeros > 20);
  CHECK(zeros < 80);

  Tape t3;
  Tensor c = ops::dropout(t3, x, 0.0, rng1);
  CHECK(c.data() == x.data());
  CHECK_THROWS_AS(static_cast<void>(ops::dropout(t3, x, 1.0, rng1)), ConfigError);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from_data({3}, {1, -2, 3}, true);
  Adam adam({p}, {});
  adam.step();
  CHECK(p.data() == std::vector<double>{1, -2, 3});
}

TEST_CASE("adam first step moves each coordinate by about -lr") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Tensor p = Tensor::from_data({2}, {1.0, 1.0}, true);
  p.grad()[0] = 0.5;
  p.grad()[1] = -3.0;
  Adam adam({p}, cfg);
  adam.step();
  // t=1 bias correction makes m_hat=g, v_hat=g^2, so update = -lr*g/(|g|+eps)
  CHECK(p.at(0) == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
  CHECK(p.at(1) == doctest::Approx(1.0 + 0.1).epsilon(1e-6));
}

TEST_CASE("adam two-step trace matches hand-executed recurrence") {
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  Tensor p = Tensor::from_data({1}, {0.7}, true);
  Adam adam({p}, cfg);

  // independent scalar recurrence
  double theta = 0.7, m = 0.0, v = 0.0;
  const double g1 = 0.3, g2 = -1.1;
  int t = 0;
  for (double g : {g1, g2}) {
    ++t;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    theta -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
  }

  p.grad()[0] = g1;
  adam.step();
  adam.zero_grad();
  p.grad()[0] = g2;
  adam.step();
  CHECK(p.at(0) == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients and is bit-reproducible") {
  Tensor p = Tensor::from_data({1}, {1.0}, true);
  Adam adam({p}, {});
  p.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam.step(), TrainingError);

  auto run = []() {
    Tensor q = Tensor::from_data({2}, {0.25, -0.75}, true);
    Adam a({q}, {});
    for (int i = 0; i < 5; ++i) {
      q.grad()[0] = 0.1 * (i + 1);
      q.grad()[1] = -0.2 * (i + 1);
      a.step();
      a.zero_grad();
    }
    return q.data();
  };
  CHECK(run() == run());
}

TEST_CASE("rng determinism and shuffle") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  std::vector<int> v1{1, 2, 3, 4, 5, 6}, v2{1, 2, 3, 4, 5, 6};
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
  double tn = 0.0;
  for (int i = 0; i < 1000; ++i) {
    tn = a.trunc_normal(0.02);
    CHECK(std::fabs(tn) <= 0.04);
  }
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ginet/error.hpp"
#include "ginet/informer.hpp"
#include "support.hpp"

using namespace ginet;
using ginet::test::gradcheck;
using ginet::test::named;
using ginet::test::random_tensor;
using ginet::test::weighted_sum;

namespace {

void check_values(const Tensor& t, std::initializer_list<double> expected, double tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  std::size_t i = 0;
  for (double e : expected) {
    CHECK(t.data()[i] == doctest::Approx(e).epsilon(tol));
    ++i;
  }
}

}  // namespace

TEST_CASE("matmul: identity, hand arithmetic, shape") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  check_values(matmul(eye, Tensor::from({2, 2}, {5, 6, 7, 8})), {5, 6, 7, 8});
  check_values(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})), {11});
  Rng rng(1);
  const Tensor c = matmul(random_tensor({2, 3}, rng), random_tensor({3, 4}, rng));
  CHECK(c.shape() == Shape{2, 4});
}

TEST_CASE("matmul: mismatch names both shapes, counts m*k*n") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
  OpCounter::reset();
  matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}));
  CHECK(OpCounter::value() == 24);
}

TEST_CASE("matmul is associative on random matrices") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({3, 4}, rng, 2.0, false);
    const Tensor b = random_tensor({4, 2}, rng, 2.0, false);
    const Tensor c = random_tensor({2, 5}, rng, 2.0, false);
    const Tensor l = matmul(matmul(a, b), c);
    const Tensor r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.numel(); ++i) CHECK(std::abs(l.data()[i] - r.data()[i]) < 1e-9);
  }
}

TEST_CASE("softmax examples") {
  check_values(softmax(Tensor::from({2}, {0, 0})), {0.5, 0.5});
  check_values(softmax(Tensor::from({2}, {std::log(2.0), 0})), {2.0 / 3.0, 1.0 / 3.0});
  const Tensor big = softmax(Tensor::from({2}, {1000, 0}));
  CHECK(std::isfinite(big.data()[0]));
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] < 1e-300);
}

TEST_CASE("softmax rows sum to one and are permutation-equivariant") {
  Rng rng(3);
  const Tensor x = random_tensor({5, 7}, rng, 10.0, false);
  const Tensor y = softmax(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(y.at({r, c}) >= 0.0);
      s += y.at({r, c});
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  std::vector<double> permuted;
  for (std::size_t r = 0; r < 5; ++r) {
    for (auto p : perm) permuted.push_back(x.at({r, p}));
  }
  const Tensor yp = softmax(Tensor::from({5, 7}, permuted));
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 7; ++c) CHECK(yp.at({r, c}) == doctest::Approx(y.at({r, perm[c]})).epsilon(1e-14));
  }
}

TEST_CASE("conv1d examples") {
  const Tensor x = Tensor::from({1, 3, 1}, {1, 2, 3});
  check_values(conv1d(x, Tensor::from({1, 1, 1}, {1}), Padding::Zero), {1, 2, 3});
  check_values(conv1d(x, Tensor::from({3, 1, 1}, {0, 1, 0}), Padding::Zero), {1, 2, 3});
  // [1, 1, 1] kernel: zero padding sums neighbours; circular wraps them
  check_values(conv1d(x, Tensor::from({3, 1, 1}, {1, 1, 1}), Padding::Zero), {3, 6, 5});
  check_values(conv1d(x, Tensor::from({3, 1, 1}, {1, 1, 1}), Padding::Circular), {6, 6, 6});
  Rng rng(2);
  const Tensor long_x = random_tensor({2, 100, 3}, rng, 1.0, false);
  OpCounter::reset();
  const Tensor y = conv1d(long_x, random_tensor({3, 3, 4}, rng, 1.0, false), Padding::Circular);
  CHECK(y.shape() == Shape{2, 100, 4});
  CHECK(OpCounter::value() == 2u * 100 * 3 * 3 * 4);
  CHECK_THROWS_AS(conv1d(long_x, Tensor::zeros({2, 3, 4}), Padding::Zero), ConfigError);
}

TEST_CASE("conv1d matches a brute-force loop") {
  Rng rng(11);
  const std::size_t B = 2, L = 6, Ci = 3, Co = 2, W = 3;
  const Tensor x = random_tensor({B, L, Ci}, rng, 1.0, false);
  const Tensor k = random_tensor({W, Ci, Co}, rng, 1.0, false);
  for (Padding pad : {Padding::Zero, Padding::Circular}) {
    const Tensor y = conv1d(x, k, pad);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t o = 0; o < Co; ++o) {
          double s = 0.0;
          for (std::size_t w = 0; w < W; ++w) {
            long src = static_cast<long>(t + w) - 1;
            if (src < 0 || src >= static_cast<long>(L)) {
              if (pad == Padding::Zero) continue;
              src = (src + static_cast<long>(L)) % static_cast<long>(L);
            }
            for (std::size_t c = 0; c < Ci; ++c) s += x.at({b, static_cast<std::size_t>(src), c}) * k.at({w, c, o});
          }
          CHECK(y.at({b, t, o}) == doctest::Approx(s).epsilon(1e-13));
        }
      }
    }
  }
}

TEST_CASE("backward examples") {
  const Tensor x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  const Tensor a = Tensor::from({1, 1}, {2}, true);
  const Tensor b = Tensor::from({1, 1}, {3}, true);
  backward(sum(matmul(a, b)));
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK(b.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward contract errors") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), ContractError);
  CHECK_THROWS_AS(backward(sum(Tensor::from({2}, {1, 2}))), ContractError);
  const Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), ContractError);
}

TEST_CASE("gradients accumulate across backward calls and reset with zero_grad") {
  Tensor x = Tensor::from({2}, {1, -2}, true);
  backward(sum(mul(x, x)));
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
  x.zero_grad();
  CHECK((!x.has_grad() || x.grad()[0] == 0.0));
}

TEST_CASE("NoGradGuard records nothing") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = sum(mul(x, x));
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("dropout: inverted scaling, rate 0 is identity") {
  Rng rng(5);
  const Tensor x = Tensor::full({10000}, 1.0);
  const Tensor y = dropout(x, 0.25, rng);
  std::size_t kept = 0;
  for (double v : y.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(static_cast<double>(kept) / 10000.0 == doctest::Approx(0.75).epsilon(0.03));
  CHECK(dropout(x, 0.0, rng).same_node(x));
  CHECK_THROWS_AS(dropout(x, 1.0, rng), ConfigError);
}

TEST_CASE("max_pool1d and mean_rows by hand") {
  const Tensor x = Tensor::from({1, 7, 1}, {1, 5, 2, 0, 3, 9, 4});
  const Tensor p = max_pool1d(x, 3, 2, 1);
  check_values(p, {5, 5, 9, 9});
  const Tensor v = Tensor::from({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  check_values(mean_rows(v, 3, false), {3, 4, 3, 4, 3, 4});
  check_values(mean_rows(v, 3, true), {1, 2, 2, 3, 3, 4});
}

TEST_CASE("layer_norm output has zero mean and unit variance") {
  Rng rng(4);
  const Tensor x = random_tensor({3, 8}, rng, 2.0, false);
  const Tensor y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-5);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at({r, c}) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m) / 8.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("full attention op count quadruples per doubling") {
  NoGradGuard guard;
  Rng rng(8);
  std::vector<std::uint64_t> ops;
  for (std::size_t L : {32, 64, 128}) {
    const Tensor q = random_tensor({1, 2, L, 4}, rng, 1.0, false);
    OpCounter::reset();
    full_attention(q, q, q, false);
    ops.push_back(OpCounter::value());
  }
  for (std::size_t i = 1; i < ops.size(); ++i) {
    const double ratio = static_cast<double>(ops[i]) / static_cast<double>(ops[i - 1]);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
  }
}

// ---------------------------------------------------------------------------
// Finite-difference checks, one per differentiable op. Inputs in [-2, 2].

TEST_CASE("gradcheck: elementwise and activations") {
  Rng rng(21);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);
  auto ok = [](const test::GradCheck& g) {
    INFO(g.worst_name << " rel " << g.worst);
    CHECK(g.worst < 1e-6);
  };
  ok(gradcheck(named({a, b}), [&] { return weighted_sum(add(a, b)); }));
  ok(gradcheck(named({a, b}), [&] { return weighted_sum(sub(a, b)); }));
  ok(gradcheck(named({a, b}), [&] { return weighted_sum(mul(a, b)); }));
  ok(gradcheck(named({a}), [&] { return weighted_sum(scale(a, -1.7)); }));
  ok(gradcheck(named({a, bias}), [&] { return weighted_sum(add_bias(a, bias)); }));
  ok(gradcheck(named({a}), [&] { return weighted_sum(sigmoid(a)); }));
  ok(gradcheck(named({a}), [&] { return weighted_sum(tanh(a)); }));
  ok(gradcheck(named({a}), [&] { return weighted_sum(elu(a)); }));
  ok(gradcheck(named({a}), [&] { return mean(mul(a, a)); }));
  // keep ReLU inputs away from the kink
  Tensor away = random_tensor({3, 4}, rng);
  for (auto& v : away.mutable_data()) v = v >= 0 ? v + 0.1 : v - 0.1;
  ok(gradcheck(named({away}), [&] { return weighted_sum(relu(away)); }));
}

TEST_CASE("gradcheck: linear algebra and normalization") {
  Rng rng(22);
  auto ok = [](const test::GradCheck& g) {
    INFO(g.worst_name << " rel " << g.worst);
    CHECK(g.worst < 1e-6);
  };
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  ok(gradcheck(named({a, b}), [&] { return weighted_sum(matmul(a, b)); }));
  const Tensor x = random_tensor({2, 3, 3, 4}, rng), y = random_tensor({2, 3, 4, 5}, rng);
  const Tensor yt = random_tensor({2, 3, 5, 4}, rng);
  ok(gradcheck(named({x, y}), [&] { return weighted_sum(batched_matmul(x, y)); }));
  ok(gradcheck(named({x, yt}), [&] { return weighted_sum(batched_matmul(x, yt, true)); }));
  const Tensor w = random_tensor({4, 3}, rng), bias = random_tensor({3}, rng);
  ok(gradcheck(named({x, w, bias}), [&] { return weighted_sum(linear(x, w, bias)); }));
  ok(gradcheck(named({a}), [&] { return weighted_sum(softmax(a)); }));
  const Tensor g = random_tensor({4}, rng), be = random_tensor({4}, rng);
  ok(gradcheck(named({a, g, be}), [&] { return weighted_sum(layer_norm(a, g, be, 1e-5)); }));
  const Tensor s = random_tensor({2, 4, 4}, rng);
  ok(gradcheck(named({s}), [&] { return weighted_sum(softmax(causal_mask(s))); }));
}

TEST_CASE("gradcheck: shape manipulation and row ops") {
  Rng rng(23);
  auto ok = [](const test::GradCheck& g) {
    INFO(g.worst_name << " rel " << g.worst);
    CHECK(g.worst < 1e-6);
  };
  const Tensor x = random_tensor({2, 3, 4}, rng), z = random_tensor({2, 2, 4}, rng);
  ok(gradcheck(named({x}), [&] { return weighted_sum(reshape(x, {6, 4})); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(permute(x, {2, 0, 1})); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(slice(x, 1, 1, 2)); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(select(x, 2, 3)); }));
  ok(gradcheck(named({x, z}), [&] { return weighted_sum(concat({x, z}, 1)); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(stack({x, scale(x, 2.0)}, 1)); }));
  const std::vector<std::size_t> rows{2, 0, 1, 2};
  ok(gradcheck(named({x}), [&] { return weighted_sum(gather_rows(x, rows, 2)); }));
  ok(gradcheck(named({x, z}), [&] { return weighted_sum(scatter_rows(x, z, rows)); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(mean_rows(x, 3, false)); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(mean_rows(x, 3, true)); }));
}

TEST_CASE("gradcheck: convolution, pooling, dropout") {
  Rng rng(24);
  auto ok = [](const test::GradCheck& g) {
    INFO(g.worst_name << " rel " << g.worst);
    CHECK(g.worst < 1e-6);
  };
  const Tensor x = random_tensor({2, 5, 3}, rng), k = random_tensor({3, 3, 2}, rng);
  ok(gradcheck(named({x, k}), [&] { return weighted_sum(conv1d(x, k, Padding::Zero)); }));
  ok(gradcheck(named({x, k}), [&] { return weighted_sum(conv1d(x, k, Padding::Circular)); }));
  ok(gradcheck(named({x}), [&] { return weighted_sum(max_pool1d(x, 3, 2, 1)); }));
  ok(gradcheck(named({x}), [&] {
    Rng drop(77);
    return weighted_sum(dropout(x, 0.3, drop));
  }));
}

TEST_CASE("gradcheck: small network using every layer type") {
  Rng rng(25);
  const Tensor x = random_tensor({2, 6, 3}, rng, 2.0, false);
  const Tensor k = random_tensor({3, 3, 4}, rng, 0.5);
  const Tensor w = random_tensor({4, 4}, rng, 0.5), b = random_tensor({4}, rng, 0.5);
  const Tensor g = random_tensor({4}, rng), be = random_tensor({4}, rng);
  auto loss = [&] {
    Tensor h = conv1d(x, k, Padding::Circular);
    h = elu(max_pool1d(h, 3, 2, 1));
    h = layer_norm(linear(h, w, b), g, be);
    const Tensor att = softmax(batched_matmul(h, h, true));
    Rng drop(3);
    h = dropout(tanh(batched_matmul(att, h)), 0.2, drop);
    return mean(mul(sigmoid(h), h));
  };
  const auto r = gradcheck(named({k, w, b, g, be}), loss);
  INFO(r.worst_name << " rel " << r.worst);
  CHECK(r.worst < 1e-4);
}

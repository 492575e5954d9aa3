#include <doctest.h>

#include <cmath>

#include "ginet/error.hpp"
#include "ginet/gru.hpp"
#include "support.hpp"

using namespace ginet;
using ginet::test::gradcheck;
using ginet::test::random_tensor;
using ginet::test::weighted_sum;

namespace {

GruLayerParams zero_layer(std::size_t in, std::size_t hidden) {
  GruLayerParams p;
  p.w_z = Tensor::zeros({in, hidden});
  p.w_r = Tensor::zeros({in, hidden});
  p.w_h = Tensor::zeros({in, hidden});
  p.u_z = Tensor::zeros({hidden, hidden});
  p.u_r = Tensor::zeros({hidden, hidden});
  p.u_h = Tensor::zeros({hidden, hidden});
  p.b_z = Tensor::zeros({hidden});
  p.b_r = Tensor::zeros({hidden});
  p.b_h = Tensor::zeros({hidden});
  return p;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Scalar reference for one GRU step on a single example.
std::vector<double> ref_step(std::span<const double> x, std::span<const double> h, const GruLayerParams& p) {
  const std::size_t in = p.input_dim(), H = p.hidden_dim();
  auto affine = [&](const Tensor& w, const Tensor& u, const Tensor& b, std::span<const double> hv, std::size_t j) {
    double s = b.data()[j];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w.data()[i * H + j];
    for (std::size_t i = 0; i < H; ++i) s += hv[i] * u.data()[i * H + j];
    return s;
  };
  std::vector<double> z(H), r(H), rh(H), out(H);
  for (std::size_t j = 0; j < H; ++j) {
    z[j] = sig(affine(p.w_z, p.u_z, p.b_z, h, j));
    r[j] = sig(affine(p.w_r, p.u_r, p.b_r, h, j));
  }
  for (std::size_t j = 0; j < H; ++j) rh[j] = r[j] * h[j];
  for (std::size_t j = 0; j < H; ++j) {
    const double c = std::tanh(affine(p.w_h, p.u_h, p.b_h, rh, j));
    out[j] = (1.0 - z[j]) * h[j] + z[j] * c;
  }
  return out;
}

}  // namespace

TEST_CASE("gru_cell_step: zero parameters halve the state") {
  const auto p = zero_layer(3, 4);
  const Tensor h = Tensor::from({1, 4}, {0.4, -0.8, 1.0, 0.0});
  const Tensor out = gru_cell_step(Tensor::from({1, 3}, {1, 2, 3}), h, p);
  for (std::size_t j = 0; j < 4; ++j) CHECK(out.data()[j] == doctest::Approx(0.5 * h.data()[j]));
  const Tensor zero = gru_cell_step(Tensor::from({1, 3}, {1, 2, 3}), Tensor::zeros({1, 4}), p);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("gru_cell_step: hidden 1024 output width, dimension checks") {
  Rng rng(1);
  const auto p = GruLayerParams::init(3, 1024, rng);
  const Tensor out = gru_cell_step(Tensor::zeros({2, 3}), Tensor::zeros({2, 1024}), p);
  CHECK(out.shape() == Shape{2, 1024});
  CHECK_THROWS_AS(gru_cell_step(Tensor::zeros({2, 4}), Tensor::zeros({2, 1024}), p), DimensionError);
  CHECK_THROWS_AS(gru_cell_step(Tensor::zeros({2, 3}), Tensor::zeros({2, 8}), p), DimensionError);
}

TEST_CASE("gru_cell_step matches a scalar reference and stays bounded") {
  Rng rng(2);
  const auto p = GruLayerParams::init(3, 5, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({1, 3}, rng, 2.0, false);
    const Tensor h = random_tensor({1, 5}, rng, 1.0, false);
    const Tensor out = gru_cell_step(x, h, p);
    const auto ref = ref_step(x.data(), h.data(), p);
    double hmax = 0.0;
    for (double v : h.data()) hmax = std::max(hmax, std::abs(v));
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(out.data()[j] == doctest::Approx(ref[j]).epsilon(1e-13));
      CHECK(std::abs(out.data()[j]) <= std::max(hmax, 1.0));
    }
  }
}

TEST_CASE("GruEncoder: shape contract, eval determinism, T_in = 1 by hand") {
  Rng rng(3);
  GruEncoder gru(GruConfig{3, 6, 2, 0.2}, rng);
  const Tensor x = random_tensor({2, 7, 3}, rng, 1.0, false);
  ForwardContext ctx;
  const Tensor a = gru.forward(x, ctx);
  const Tensor b = gru.forward(x, ctx);
  CHECK(a.shape() == Shape{2, 7, 3});
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

  const Tensor x1 = random_tensor({1, 1, 3}, rng, 1.0, false);
  const Tensor out = gru.forward(x1, ctx);
  const std::vector<double> zero6(6, 0.0);
  const auto h1 = ref_step(x1.data(), zero6, gru.layers()[0]);
  const auto h2 = ref_step(h1, zero6, gru.layers()[1]);
  const auto& w = gru.projection().weight;
  const auto& bias = gru.projection().bias;
  for (std::size_t o = 0; o < 3; ++o) {
    double s = bias.data()[o];
    for (std::size_t j = 0; j < 6; ++j) s += h2[j] * w.data()[j * 3 + o];
    CHECK(out.data()[o] == doctest::Approx(s).epsilon(1e-13));
  }
}

TEST_CASE("GruEncoder: zero projection gives zero output; hidden states stay in (-1, 1)") {
  Rng rng(4);
  GruEncoder gru(GruConfig{3, 5, 2, 0.0}, rng);
  gru.projection().zero();
  const Tensor x = random_tensor({2, 9, 3}, rng, 2.0, false);
  ForwardContext ctx;
  const Tensor y = gru.forward(x, ctx);
  for (double v : y.data()) CHECK(v == 0.0);
  const Tensor hs = gru.hidden_sequence(x, ctx);
  for (double v : hs.data()) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("GruEncoder: train-mode dropout changes layer-2 input; eval does not") {
  Rng rng(5);
  GruEncoder gru(GruConfig{3, 8, 2, 0.5}, rng);
  const Tensor x = random_tensor({1, 4, 3}, rng, 1.0, false);
  ForwardContext eval;
  ForwardContext train{Mode::Train, Rng(1)};
  const Tensor e = gru.forward(x, eval);
  const Tensor t = gru.forward(x, train);
  bool differs = false;
  for (std::size_t i = 0; i < e.numel(); ++i) differs |= e.data()[i] != t.data()[i];
  CHECK(differs);
  CHECK_THROWS_AS(gru.forward(Tensor::zeros({1, 4, 2}), eval), DimensionError);
}

TEST_CASE("GruConfig validation") {
  CHECK_THROWS_AS((GruConfig{3, 0, 2, 0.2}.validate()), ConfigError);
  CHECK_THROWS_AS((GruConfig{3, 4, 0, 0.2}.validate()), ConfigError);
  CHECK_THROWS_AS((GruConfig{3, 4, 2, 1.0}.validate()), ConfigError);
}

TEST_CASE("gradcheck: 3-step GRU with hidden 4") {
  Rng rng(6);
  GruEncoder gru(GruConfig{3, 4, 2, 0.0}, rng);
  const Tensor x = random_tensor({2, 3, 3}, rng, 2.0, false);
  ParamList params;
  gru.collect("gru", params);
  const auto r = gradcheck(params, [&] {
    ForwardContext ctx;
    return weighted_sum(gru.forward(x, ctx));
  });
  INFO(r.worst_name << " rel " << r.worst);
  CHECK(r.worst < 1e-4);
}

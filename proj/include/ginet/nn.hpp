#pragma once

#include <string>
#include <vector>

#include "ginet/rng.hpp"
#include "ginet/tensor.hpp"

namespace ginet {

enum class Mode { Train, Eval };

/// Per-call state for a forward pass: mode plus the random source that
/// dropout and key sampling draw from.
struct ForwardContext {
  Mode mode = Mode::Eval;
  Rng rng{0};

  bool training() const { return mode == Mode::Train; }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

/// Affine map y = x W + b with W stored as [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  /// uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
  void zero();
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm init(std::size_t dim, double eps = 1e-5);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParamList& out) const;
};

inline Tensor maybe_dropout(const Tensor& x, double rate, ForwardContext& ctx) {
  return ctx.training() && rate > 0.0 ? dropout(x, rate, ctx.rng) : x;
}

}  // namespace ginet

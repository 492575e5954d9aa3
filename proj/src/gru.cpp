#include "ginet/gru.hpp"

#include <cmath>

#include "ginet/error.hpp"

namespace ginet {

namespace {

Tensor step_from_projected(const Tensor& xz, const Tensor& xr, const Tensor& xh, const Tensor& h,
                           const GruLayerParams& p) {
  const Tensor z = sigmoid(add(xz, matmul(h, p.u_z)));
  const Tensor r = sigmoid(add(xr, matmul(h, p.u_r)));
  const Tensor c = tanh(add(xh, matmul(mul(r, h), p.u_h)));
  return add(h, mul(z, sub(c, h)));
}

}  // namespace

void GruConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("GRU dimensions must be positive");
  if (num_layers == 0) throw ConfigError("GRU needs at least one layer");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("GRU dropout must be in [0, 1)");
}

GruLayerParams GruLayerParams::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  auto u = [&](Shape s) { return Tensor::uniform(std::move(s), -k, k, rng, true); };
  GruLayerParams p;
  p.w_z = u({input_dim, hidden_dim});
  p.w_r = u({input_dim, hidden_dim});
  p.w_h = u({input_dim, hidden_dim});
  p.u_z = u({hidden_dim, hidden_dim});
  p.u_r = u({hidden_dim, hidden_dim});
  p.u_h = u({hidden_dim, hidden_dim});
  p.b_z = u({hidden_dim});
  p.b_r = u({hidden_dim});
  p.b_h = u({hidden_dim});
  return p;
}

void GruLayerParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w_z", w_z});
  out.push_back({prefix + ".w_r", w_r});
  out.push_back({prefix + ".w_h", w_h});
  out.push_back({prefix + ".u_z", u_z});
  out.push_back({prefix + ".u_r", u_r});
  out.push_back({prefix + ".u_h", u_h});
  out.push_back({prefix + ".b_z", b_z});
  out.push_back({prefix + ".b_r", b_r});
  out.push_back({prefix + ".b_h", b_h});
}

Tensor gru_cell_step(const Tensor& x, const Tensor& h_prev, const GruLayerParams& params) {
  if (x.rank() != 2 || h_prev.rank() != 2 || x.dim(0) != h_prev.dim(0) ||
      x.dim(1) != params.input_dim() || h_prev.dim(1) != params.hidden_dim()) {
    throw DimensionError("gru_cell_step: x " + shape_str(x.shape()) + " / h " + shape_str(h_prev.shape()) +
                         " do not match params (" + std::to_string(params.input_dim()) + " -> " +
                         std::to_string(params.hidden_dim()) + ")");
  }
  return step_from_projected(add_bias(matmul(x, params.w_z), params.b_z),
                             add_bias(matmul(x, params.w_r), params.b_r),
                             add_bias(matmul(x, params.w_h), params.b_h), h_prev, params);
}

GruEncoder::GruEncoder(const GruConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  std::size_t in = config_.input_dim;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    layers_.push_back(GruLayerParams::init(in, config_.hidden_dim, rng));
    in = config_.hidden_dim;
  }
  projection_ = Linear::init(config_.hidden_dim, config_.input_dim, rng);
}

Tensor GruEncoder::hidden_sequence(const Tensor& x, ForwardContext& ctx) const {
  if (x.rank() != 3 || x.dim(2) != config_.input_dim) {
    throw DimensionError("GRU input must be [batch, T, " + std::to_string(config_.input_dim) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), steps = x.dim(1);
  Tensor seq = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& p = layers_[l];
    if (l > 0) seq = maybe_dropout(seq, config_.dropout, ctx);
    // Input-side projections for all steps at once.
    const Tensor xz = linear(seq, p.w_z, p.b_z);
    const Tensor xr = linear(seq, p.w_r, p.b_r);
    const Tensor xh = linear(seq, p.w_h, p.b_h);
    Tensor h = Tensor::zeros({batch, config_.hidden_dim});
    std::vector<Tensor> states;
    states.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      h = step_from_projected(select(xz, 1, t), select(xr, 1, t), select(xh, 1, t), h, p);
      states.push_back(h);
    }
    seq = stack(states, 1);
  }
  return seq;
}

Tensor GruEncoder::forward(const Tensor& x, ForwardContext& ctx) const {
  return projection_(hidden_sequence(x, ctx));
}

void GruEncoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].collect(prefix + ".l" + std::to_string(l), out);
  projection_.collect(prefix + ".proj", out);
}

}  // namespace ginet

#pragma once

#include <vector>

#include "ginet/nn.hpp"

namespace ginet {

struct GruConfig {
  std::size_t input_dim = 3;
  std::size_t hidden_dim = 1024;
  std::size_t num_layers = 2;
  double dropout = 0.2;  // between consecutive layers, train mode only

  void validate() const;
};

/// Gate weights of one GRU layer. Input maps are [input, hidden], recurrent
/// maps are [hidden, hidden].
struct GruLayerParams {
  Tensor w_z, w_r, w_h;
  Tensor u_z, u_r, u_h;
  Tensor b_z, b_r, b_h;

  static GruLayerParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  std::size_t input_dim() const { return w_z.dim(0); }
  std::size_t hidden_dim() const { return w_z.dim(1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// One GRU step on a batch:
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   c = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * c
/// x is [batch, input], h_prev is [batch, hidden].
Tensor gru_cell_step(const Tensor& x, const Tensor& h_prev, const GruLayerParams& params);

/// Stacked GRU over [batch, T, input] with a per-slot affine projection of the
/// top layer back to the input width, so the result aligns with the input.
class GruEncoder {
 public:
  GruEncoder(const GruConfig& config, Rng& rng);

  /// Top-layer hidden states, [batch, T, hidden]. Initial state is zero.
  Tensor hidden_sequence(const Tensor& x, ForwardContext& ctx) const;

  /// hidden_sequence() projected to [batch, T, input].
  Tensor forward(const Tensor& x, ForwardContext& ctx) const;

  const GruConfig& config() const { return config_; }
  std::vector<GruLayerParams>& layers() { return layers_; }
  const std::vector<GruLayerParams>& layers() const { return layers_; }
  Linear& projection() { return projection_; }
  const Linear& projection() const { return projection_; }
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  GruConfig config_;
  std::vector<GruLayerParams> layers_;
  Linear projection_;
};

}  // namespace ginet

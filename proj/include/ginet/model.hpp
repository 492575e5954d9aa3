#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ginet/battery_data.hpp"
#include "ginet/gru.hpp"
#include "ginet/informer.hpp"

namespace ginet {

enum class Variant { GiNet, InformerOnly, GruOnly };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct GiNetConfig {
  std::size_t t_in = 100;
  std::size_t t_out = 10;
  std::size_t label_len = 50;
  double slot_seconds = 1.0;
  Variant variant = Variant::GiNet;
  GruConfig gru;
  InformerConfig informer;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Elementwise H + X; shapes must match.
Tensor fuse(const Tensor& h, const Tensor& x);

/// Mean of the horizon predictions.
double average_horizon(std::span<const double> horizon);

/// Per-slot temporal features for `length` slots starting at each batch
/// entry's start time: [batch, length, 1].
Tensor time_marks(std::span<const double> start_times, std::size_t first_slot, std::size_t length,
                  double slot_seconds);

/// GRU-enhanced Informer and its two ablations.
///
///   GiNet:        Informer(embed(GRU(X) + X))
///   InformerOnly: Informer(embed(X))
///   GruOnly:      affine(last GRU hidden state) -> T_out
///
/// Each branch draws its initial weights from its own seed stream, so the
/// Informer weights of a GiNet and an InformerOnly model with the same seed
/// are identical.
class GiNetModel {
 public:
  explicit GiNetModel(const GiNetConfig& config);

  /// x [batch, T_in, 3] normalized features; start_times holds the timestamp
  /// of each window's first input slot. Returns [batch, T_out].
  Tensor forward(const Tensor& x, std::span<const double> start_times, ForwardContext& ctx) const;

  const GiNetConfig& config() const { return config_; }
  ParamList parameters() const;

  GruEncoder* gru() { return gru_ ? &*gru_ : nullptr; }
  Informer* informer() { return informer_ ? &*informer_ : nullptr; }

 private:
  GiNetConfig config_;
  std::optional<GruEncoder> gru_;
  std::optional<Informer> informer_;
  Linear gru_head_;
};

/// Stacks window inputs into [batch, T_in, 3].
Tensor batch_inputs(std::span<const WindowSample* const> windows, std::size_t t_in);
/// Stacks window targets into [batch, T_out].
Tensor batch_targets(std::span<const WindowSample* const> windows, std::size_t t_out);

}  // namespace ginet

#include "ginet/model.hpp"

#include "ginet/error.hpp"

namespace ginet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::GiNet: return "ginet";
    case Variant::InformerOnly: return "informer";
    case Variant::GruOnly: return "gru";
  }
  return "ginet";
}

Variant parse_variant(const std::string& s) {
  if (s == "ginet") return Variant::GiNet;
  if (s == "informer") return Variant::InformerOnly;
  if (s == "gru") return Variant::GruOnly;
  throw ConfigError("unknown variant '" + s + "' (expected ginet, informer or gru)");
}

void GiNetConfig::validate() const {
  if (t_in == 0 || t_out == 0) throw ConfigError("T_in and T_out must be positive");
  if (label_len > t_in) {
    throw ConfigError("label_len (" + std::to_string(label_len) + ") exceeds T_in (" + std::to_string(t_in) + ")");
  }
  if (!(slot_seconds > 0.0)) throw ConfigError("slot_seconds must be positive");
  if (gru.input_dim != kNumFeatures || informer.input_dim != kNumFeatures) {
    throw ConfigError("model input width must be " + std::to_string(kNumFeatures));
  }
  gru.validate();
  informer.validate();
}

Tensor fuse(const Tensor& h, const Tensor& x) {
  if (h.shape() != x.shape()) {
    throw DimensionError("fuse: GRU features " + shape_str(h.shape()) + " do not match input " +
                         shape_str(x.shape()));
  }
  return add(h, x);
}

double average_horizon(std::span<const double> horizon) {
  if (horizon.empty()) throw DimensionError("average_horizon: empty horizon");
  double total = 0.0;
  for (double v : horizon) total += v;
  return total / static_cast<double>(horizon.size());
}

Tensor time_marks(std::span<const double> start_times, std::size_t first_slot, std::size_t length,
                  double slot_seconds) {
  std::vector<double> marks;
  marks.reserve(start_times.size() * length);
  for (double start : start_times) {
    for (std::size_t i = 0; i < length; ++i) {
      marks.push_back(temporal_feature(start + static_cast<double>(first_slot + i) * slot_seconds));
    }
  }
  return Tensor::from({start_times.size(), length, 1}, std::move(marks));
}

GiNetModel::GiNetModel(const GiNetConfig& config) : config_(config) {
  config_.validate();
  if (config_.variant != Variant::GruOnly) {
    Rng rng(derive_seed(config_.seed, 1));
    informer_.emplace(config_.informer, rng);
  }
  if (config_.variant != Variant::InformerOnly) {
    Rng rng(derive_seed(config_.seed, 2));
    gru_.emplace(config_.gru, rng);
  }
  if (config_.variant == Variant::GruOnly) {
    Rng rng(derive_seed(config_.seed, 3));
    gru_head_ = Linear::init(config_.gru.hidden_dim, config_.t_out, rng);
  }
}

Tensor GiNetModel::forward(const Tensor& x, std::span<const double> start_times, ForwardContext& ctx) const {
  if (x.rank() != 3 || x.dim(1) != config_.t_in || x.dim(2) != kNumFeatures) {
    throw DimensionError("model input must be [batch, " + std::to_string(config_.t_in) + ", 3], got " +
                         shape_str(x.shape()));
  }
  if (start_times.size() != x.dim(0)) throw DimensionError("one start time per batch entry required");

  if (config_.variant == Variant::GruOnly) {
    const Tensor hidden = gru_->hidden_sequence(x, ctx);
    return gru_head_(select(hidden, 1, config_.t_in - 1));
  }

  const Tensor fused = config_.variant == Variant::GiNet ? fuse(gru_->forward(x, ctx), x) : x;
  const Tensor dec_in = build_decoder_input(fused, config_.label_len, config_.t_out);
  const Tensor enc_marks = time_marks(start_times, 0, config_.t_in, config_.slot_seconds);
  const Tensor dec_marks = time_marks(start_times, config_.t_in - config_.label_len,
                                      config_.label_len + config_.t_out, config_.slot_seconds);
  return informer_->forward(fused, enc_marks, dec_in, dec_marks, config_.t_out, ctx);
}

ParamList GiNetModel::parameters() const {
  ParamList out;
  if (informer_) informer_->collect("informer", out);
  if (gru_) gru_->collect("gru", out);
  if (config_.variant == Variant::GruOnly) gru_head_.collect("gru_head", out);
  return out;
}

Tensor batch_inputs(std::span<const WindowSample* const> windows, std::size_t t_in) {
  if (windows.empty()) throw DimensionError("empty batch");
  std::vector<double> data;
  data.reserve(windows.size() * t_in * kNumFeatures);
  for (const auto* w : windows) {
    if (w->input.size() != t_in * kNumFeatures) {
      throw DimensionError("window input has " + std::to_string(w->input.size()) + " values, expected " +
                           std::to_string(t_in * kNumFeatures));
    }
    data.insert(data.end(), w->input.begin(), w->input.end());
  }
  return Tensor::from({windows.size(), t_in, kNumFeatures}, std::move(data));
}

Tensor batch_targets(std::span<const WindowSample* const> windows, std::size_t t_out) {
  if (windows.empty()) throw DimensionError("empty batch");
  std::vector<double> data;
  data.reserve(windows.size() * t_out);
  for (const auto* w : windows) {
    if (w->target.size() != t_out) throw DimensionError("window target length does not match T_out");
    data.insert(data.end(), w->target.begin(), w->target.end());
  }
  return Tensor::from({windows.size(), t_out}, std::move(data));
}

}  // namespace ginet

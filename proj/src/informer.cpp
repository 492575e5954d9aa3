#include "ginet/informer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ginet/error.hpp"

namespace ginet {

namespace {

struct AttnDims {
  std::size_t batch, lq, lk, d;
};

AttnDims attention_dims(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() < 3 || k.rank() != q.rank() || v.rank() != q.rank()) {
    throw DimensionError("attention: Q/K/V must share rank >= 3, got " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t r = q.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (q.dim(i) != k.dim(i) || q.dim(i) != v.dim(i)) throw DimensionError("attention: batch dims differ");
  }
  if (q.dim(r - 1) != k.dim(r - 1) || k.dim(r - 2) != v.dim(r - 2)) {
    throw DimensionError("attention: incompatible Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) +
                         ", V " + shape_str(v.shape()));
  }
  AttnDims d{};
  d.lq = q.dim(r - 2);
  d.lk = k.dim(r - 2);
  d.d = q.dim(r - 1);
  d.batch = q.numel() / (d.lq * d.d);
  return d;
}

std::size_t ceil_ln(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(n))));
}

Tensor tile_rows(const Tensor& table, std::size_t batch) {
  std::vector<double> data;
  data.reserve(batch * table.numel());
  for (std::size_t b = 0; b < batch; ++b) data.insert(data.end(), table.data().begin(), table.data().end());
  return Tensor::from({batch, table.dim(0), table.dim(1)}, std::move(data));
}

}  // namespace

void InformerConfig::validate() const {
  if (input_dim == 0 || d_model == 0 || n_heads == 0 || d_ff == 0) {
    throw ConfigError("Informer dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (e_layers == 0 || d_layers == 0) throw ConfigError("e_layers and d_layers must be >= 1");
  if (sampling_factor == 0) throw ConfigError("sampling_factor must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// Attention kernels

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
  const AttnDims dims = attention_dims(q, k, v);
  Tensor scores = scale(batched_matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dims.d)));
  if (causal) scores = causal_mask(scores);
  return batched_matmul(softmax(scores), v);
}

double sparsity_measure(std::span<const double> query, std::span<const double> keys, std::size_t key_count) {
  if (key_count == 0 || keys.size() != key_count * query.size()) {
    throw DimensionError("sparsity_measure: keys do not match query width");
  }
  const std::size_t d = query.size();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  double mx = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t i = 0; i < key_count; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += query[c] * keys[i * d + c];
    s *= inv;
    mx = std::max(mx, s);
    total += s;
  }
  return mx - total / static_cast<double>(key_count);
}

std::size_t probsparse_top_u(std::size_t query_len, std::size_t factor) {
  return std::min(query_len, std::max<std::size_t>(1, factor * ceil_ln(query_len)));
}

std::size_t probsparse_sample_size(std::size_t key_len, std::size_t factor) {
  return std::min(key_len, std::max<std::size_t>(1, factor * ceil_ln(key_len)));
}

std::vector<std::size_t> probsparse_select(const Tensor& q, const Tensor& k, std::size_t u,
                                           const ProbSparseOptions& options, Rng& rng) {
  const AttnDims dims = attention_dims(q, k, k);
  const std::size_t d = dims.d;
  const std::size_t samples = options.exact_measure ? dims.lk : probsparse_sample_size(dims.lk, options.factor);

  // Same key sample for every batch entry, as the reference kernel does.
  std::vector<std::size_t> key_idx(dims.lq * samples);
  for (std::size_t i = 0; i < dims.lq; ++i) {
    for (std::size_t s = 0; s < samples; ++s) {
      key_idx[i * samples + s] = options.exact_measure ? s : rng.below(dims.lk);
    }
  }

  std::vector<std::size_t> selected;
  selected.reserve(dims.batch * u);
  std::vector<double> measure(dims.lq);
  std::vector<double> gathered(samples * d);
  std::vector<std::size_t> order(dims.lq);
  const double* qd = q.data().data();
  const double* kd = k.data().data();
  for (std::size_t b = 0; b < dims.batch; ++b) {
    for (std::size_t i = 0; i < dims.lq; ++i) {
      for (std::size_t s = 0; s < samples; ++s) {
        std::copy_n(kd + (b * dims.lk + key_idx[i * samples + s]) * d, d, gathered.data() + s * d);
      }
      measure[i] = sparsity_measure({qd + (b * dims.lq + i) * d, d}, gathered, samples);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return measure[a] > measure[c]; });
    selected.insert(selected.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(u));
  }
  OpCounter::add(static_cast<std::uint64_t>(dims.batch) * dims.lq * samples * d);
  return selected;
}

Tensor probsparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, const ProbSparseOptions& options,
                            bool causal, Rng& rng) {
  const AttnDims dims = attention_dims(q, k, v);
  if (causal && dims.lq != dims.lk) throw DimensionError("causal ProbSparse attention needs L_Q == L_K");
  const std::size_t u = probsparse_top_u(dims.lq, options.factor);
  // sparse path even when every query is active
  Tensor base = mean_rows(v, dims.lq, causal);
  const auto rows = probsparse_select(q, k, u, options, rng);
  Tensor scores = scale(batched_matmul(gather_rows(q, rows, u), k, true), 1.0 / std::sqrt(static_cast<double>(dims.d)));
  if (causal) scores = causal_mask(scores, rows);
  return scatter_rows(base, batched_matmul(softmax(scores), v), rows);
}

MultiHeadAttention MultiHeadAttention::init(std::size_t d_model, std::size_t n_heads, Rng& rng) {
  MultiHeadAttention m;
  m.query = Linear::init(d_model, d_model, rng);
  m.key = Linear::init(d_model, d_model, rng);
  m.value = Linear::init(d_model, d_model, rng);
  m.out = Linear::init(d_model, d_model, rng);
  m.n_heads = n_heads;
  return m;
}

Tensor MultiHeadAttention::forward(const Tensor& x_q, const Tensor& x_kv, bool causal, bool probsparse,
                                   const ProbSparseOptions& options, ForwardContext& ctx) const {
  const std::size_t batch = x_q.dim(0), lq = x_q.dim(1), lk = x_kv.dim(1), d_model = x_q.dim(2);
  const std::size_t dh = d_model / n_heads;
  auto heads = [&](const Tensor& t, std::size_t len) {
    return permute(reshape(t, {batch, len, n_heads, dh}), {0, 2, 1, 3});
  };
  const Tensor q = heads(query(x_q), lq);
  const Tensor k = heads(key(x_kv), lk);
  const Tensor v = heads(value(x_kv), lk);
  const Tensor ctx_heads =
      probsparse ? probsparse_attention(q, k, v, options, causal, ctx.rng) : full_attention(q, k, v, causal);
  return out(reshape(permute(ctx_heads, {0, 2, 1, 3}), {batch, lq, d_model}));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out_params) const {
  query.collect(prefix + ".q", out_params);
  key.collect(prefix + ".k", out_params);
  value.collect(prefix + ".v", out_params);
  out.collect(prefix + ".o", out_params);
}

void MultiHeadAttention::zero() {
  query.zero();
  key.zero();
  value.zero();
  out.zero();
}

// ---------------------------------------------------------------------------
// Embedding

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  std::vector<double> pe(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t c = 0; c < d_model; ++c) {
      const double even = static_cast<double>(c - c % 2);
      const double angle = static_cast<double>(pos) * std::exp(-even * std::log(10000.0) / static_cast<double>(d_model));
      pe[pos * d_model + c] = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({length, d_model}, std::move(pe));
}

double temporal_feature(double timestamp_s) {
  double sec = std::fmod(std::floor(timestamp_s), 60.0);
  if (sec < 0) sec += 60.0;
  return sec / 59.0 - 0.5;
}

DataEmbedding DataEmbedding::init(std::size_t input_dim, std::size_t d_model, Rng& rng) {
  const double bound = 1.0 / std::sqrt(3.0 * static_cast<double>(input_dim));
  DataEmbedding e;
  e.value_kernel = Tensor::uniform({3, input_dim, d_model}, -bound, bound, rng, true);
  e.temporal = Linear::init(1, d_model, rng);
  return e;
}

Tensor DataEmbedding::forward(const Tensor& x, const Tensor& marks) const {
  const std::size_t d_model = value_kernel.dim(2);
  if (x.rank() != 3 || x.dim(2) != value_kernel.dim(1)) {
    throw ConfigError("embedding expects [batch, L, " + std::to_string(value_kernel.dim(1)) + "], got " +
                      shape_str(x.shape()));
  }
  if (marks.rank() != 3 || marks.dim(0) != x.dim(0) || marks.dim(1) != x.dim(1) || marks.dim(2) != 1) {
    throw DimensionError("embedding time marks must be [batch, L, 1], got " + shape_str(marks.shape()));
  }
  const Tensor value = conv1d(x, value_kernel, Padding::Circular);
  const Tensor position = tile_rows(positional_encoding(x.dim(1), d_model), x.dim(0));
  return add(add(value, position), temporal(marks));
}

void DataEmbedding::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".value_kernel", value_kernel});
  temporal.collect(prefix + ".temporal", out);
}

// ---------------------------------------------------------------------------
// Encoder / decoder

FeedForward FeedForward::init(std::size_t d_model, std::size_t d_ff, Rng& rng) {
  return FeedForward{Linear::init(d_model, d_ff, rng), Linear::init(d_ff, d_model, rng)};
}

Tensor FeedForward::forward(const Tensor& x, double dropout_rate, ForwardContext& ctx) const {
  const Tensor h = maybe_dropout(relu(expand(x)), dropout_rate, ctx);
  return maybe_dropout(contract(h), dropout_rate, ctx);
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  expand.collect(prefix + ".expand", out);
  contract.collect(prefix + ".contract", out);
}

void FeedForward::zero() {
  expand.zero();
  contract.zero();
}

EncoderLayer EncoderLayer::init(const InformerConfig& cfg, Rng& rng) {
  EncoderLayer l;
  l.attention = MultiHeadAttention::init(cfg.d_model, cfg.n_heads, rng);
  l.ff = FeedForward::init(cfg.d_model, cfg.d_ff, rng);
  l.norm1 = LayerNorm::init(cfg.d_model, cfg.layer_norm_eps);
  l.norm2 = LayerNorm::init(cfg.d_model, cfg.layer_norm_eps);
  return l;
}

Tensor EncoderLayer::forward(const Tensor& x, const InformerConfig& cfg, ForwardContext& ctx) const {
  const ProbSparseOptions opts{cfg.sampling_factor, cfg.exact_sparsity};
  const Tensor attended = attention.forward(x, x, false, cfg.use_probsparse, opts, ctx);
  const Tensor h = norm1(add(x, maybe_dropout(attended, cfg.dropout, ctx)));
  return norm2(add(h, ff.forward(h, cfg.dropout, ctx)));
}

void EncoderLayer::collect(const std::string& prefix, ParamList& out) const {
  attention.collect(prefix + ".attn", out);
  ff.collect(prefix + ".ff", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
}

DistillLayer DistillLayer::init(std::size_t d_model, Rng& rng) {
  const double bound = 1.0 / std::sqrt(3.0 * static_cast<double>(d_model));
  DistillLayer l;
  l.kernel = Tensor::uniform({3, d_model, d_model}, -bound, bound, rng, true);
  l.bias = Tensor::uniform({d_model}, -bound, bound, rng, true);
  return l;
}

Tensor DistillLayer::forward(const Tensor& x) const {
  if (x.dim(1) < 2) return x;
  const Tensor conv = add_bias(conv1d(x, kernel, Padding::Circular), bias);
  return max_pool1d(elu(conv), 3, 2, 1);
}

void DistillLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".kernel", kernel});
  out.push_back({prefix + ".bias", bias});
}

DecoderLayer DecoderLayer::init(const InformerConfig& cfg, Rng& rng) {
  DecoderLayer l;
  l.self_attention = MultiHeadAttention::init(cfg.d_model, cfg.n_heads, rng);
  l.cross_attention = MultiHeadAttention::init(cfg.d_model, cfg.n_heads, rng);
  l.ff = FeedForward::init(cfg.d_model, cfg.d_ff, rng);
  l.norm1 = LayerNorm::init(cfg.d_model, cfg.layer_norm_eps);
  l.norm2 = LayerNorm::init(cfg.d_model, cfg.layer_norm_eps);
  l.norm3 = LayerNorm::init(cfg.d_model, cfg.layer_norm_eps);
  return l;
}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory, const InformerConfig& cfg,
                             ForwardContext& ctx) const {
  const ProbSparseOptions opts{cfg.sampling_factor, cfg.exact_sparsity};
  const Tensor self_out = self_attention.forward(x, x, true, cfg.use_probsparse, opts, ctx);
  const Tensor h1 = norm1(add(x, maybe_dropout(self_out, cfg.dropout, ctx)));
  const Tensor cross_out = cross_attention.forward(h1, memory, false, cfg.probsparse_cross, opts, ctx);
  const Tensor h2 = norm2(add(h1, maybe_dropout(cross_out, cfg.dropout, ctx)));
  return norm3(add(h2, ff.forward(h2, cfg.dropout, ctx)));
}

void DecoderLayer::collect(const std::string& prefix, ParamList& out) const {
  self_attention.collect(prefix + ".self_attn", out);
  cross_attention.collect(prefix + ".cross_attn", out);
  ff.collect(prefix + ".ff", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
  norm3.collect(prefix + ".norm3", out);
}

Tensor build_decoder_input(const Tensor& x, std::size_t label_len, std::size_t t_out) {
  if (x.rank() != 3) throw DimensionError("decoder input source must be [batch, T, C]");
  if (label_len > x.dim(1)) {
    throw ConfigError("label_len (" + std::to_string(label_len) + ") exceeds T_in (" + std::to_string(x.dim(1)) + ")");
  }
  if (t_out == 0) throw ConfigError("T_out must be positive");
  const Tensor placeholder = Tensor::zeros({x.dim(0), t_out, x.dim(2)});
  if (label_len == 0) return placeholder;
  return concat({slice(x, 1, x.dim(1) - label_len, label_len), placeholder}, 1);
}

Informer::Informer(const InformerConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  enc_embedding_ = DataEmbedding::init(config_.input_dim, config_.d_model, rng);
  dec_embedding_ = DataEmbedding::init(config_.input_dim, config_.d_model, rng);
  for (std::size_t i = 0; i < config_.e_layers; ++i) encoder_layers_.push_back(EncoderLayer::init(config_, rng));
  if (config_.use_distill) {
    for (std::size_t i = 0; i + 1 < config_.e_layers; ++i) distill_layers_.push_back(DistillLayer::init(config_.d_model, rng));
  }
  encoder_norm_ = LayerNorm::init(config_.d_model, config_.layer_norm_eps);
  for (std::size_t i = 0; i < config_.d_layers; ++i) decoder_layers_.push_back(DecoderLayer::init(config_, rng));
  decoder_norm_ = LayerNorm::init(config_.d_model, config_.layer_norm_eps);
  projection_ = Linear::init(config_.d_model, 1, rng);
}

Tensor Informer::encode(const Tensor& embedded, ForwardContext& ctx) const {
  Tensor x = embedded;
  for (std::size_t i = 0; i < encoder_layers_.size(); ++i) {
    x = encoder_layers_[i].forward(x, config_, ctx);
    if (i < distill_layers_.size()) x = distill_layers_[i].forward(x);
  }
  return encoder_norm_(x);
}

Tensor Informer::decode(const Tensor& dec_embedded, const Tensor& enc_out, ForwardContext& ctx) const {
  Tensor x = dec_embedded;
  for (const auto& layer : decoder_layers_) x = layer.forward(x, enc_out, config_, ctx);
  return decoder_norm_(x);
}

Tensor Informer::project_output(const Tensor& dec_out, std::size_t t_out) const {
  const std::size_t batch = dec_out.dim(0), len = dec_out.dim(1);
  if (t_out == 0 || t_out > len) throw DimensionError("project_output: T_out exceeds decoder length");
  return slice(reshape(projection_(dec_out), {batch, len}), 1, len - t_out, t_out);
}

Tensor Informer::forward(const Tensor& enc_in, const Tensor& enc_marks, const Tensor& dec_in, const Tensor& dec_marks,
                         std::size_t t_out, ForwardContext& ctx) const {
  const Tensor enc = encode(maybe_dropout(embed_encoder(enc_in, enc_marks), config_.dropout, ctx), ctx);
  const Tensor dec = decode(maybe_dropout(embed_decoder(dec_in, dec_marks), config_.dropout, ctx), enc, ctx);
  return project_output(dec, t_out);
}

void Informer::collect(const std::string& prefix, ParamList& out) const {
  enc_embedding_.collect(prefix + ".enc_embed", out);
  dec_embedding_.collect(prefix + ".dec_embed", out);
  for (std::size_t i = 0; i < encoder_layers_.size(); ++i) encoder_layers_[i].collect(prefix + ".enc" + std::to_string(i), out);
  for (std::size_t i = 0; i < distill_layers_.size(); ++i) distill_layers_[i].collect(prefix + ".distill" + std::to_string(i), out);
  encoder_norm_.collect(prefix + ".enc_norm", out);
  for (std::size_t i = 0; i < decoder_layers_.size(); ++i) decoder_layers_[i].collect(prefix + ".dec" + std::to_string(i), out);
  decoder_norm_.collect(prefix + ".dec_norm", out);
  projection_.collect(prefix + ".head", out);
}

}  // namespace ginet

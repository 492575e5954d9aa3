#pragma once

#include <span>
#include <vector>

#include "ginet/nn.hpp"

namespace ginet {

struct InformerConfig {
  std::size_t input_dim = 3;
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t d_ff = 2048;
  std::size_t e_layers = 2;
  std::size_t d_layers = 1;
  double dropout = 0.05;
  bool use_probsparse = true;
  bool use_distill = true;
  std::size_t sampling_factor = 5;
  /// Compute the sparsity measure against every key instead of a sample.
  bool exact_sparsity = false;
  /// ProbSparse for decoder cross-attention too (default: full).
  bool probsparse_cross = false;
  double layer_norm_eps = 1e-5;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

// ---------------------------------------------------------------------------
// Attention kernels. Q, K, V are [..., L, d]; all leading dims are batch.

/// softmax(Q K^T / sqrt(d)) V, optionally with a causal mask.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal);

/// max_i(q.k_i / sqrt(d)) - mean_i(q.k_i / sqrt(d)) over the rows of `keys`.
double sparsity_measure(std::span<const double> query, std::span<const double> keys, std::size_t key_count);

struct ProbSparseOptions {
  std::size_t factor = 5;
  bool exact_measure = false;
};

/// Number of active queries: min(L_Q, c * ceil(ln L_Q)), at least one.
std::size_t probsparse_top_u(std::size_t query_len, std::size_t factor);
/// Keys sampled per query when estimating the measure: min(L_K, c * ceil(ln L_K)).
std::size_t probsparse_sample_size(std::size_t key_len, std::size_t factor);

/// Query indices ranked by sparsity measure, `u` per batch entry, highest
/// first with ties broken by lower index. Also adds the scoring work to
/// OpCounter.
std::vector<std::size_t> probsparse_select(const Tensor& q, const Tensor& k, std::size_t u,
                                           const ProbSparseOptions& options, Rng& rng);

/// Exact attention for the top-u queries; every other query gets the mean
/// of V (or the running mean of V up to its position when causal).
Tensor probsparse_attention(const Tensor& q, const Tensor& k, const Tensor& v, const ProbSparseOptions& options,
                            bool causal, Rng& rng);

/// Projections and head split/merge around an attention kernel.
struct MultiHeadAttention {
  Linear query, key, value, out;
  std::size_t n_heads = 1;

  static MultiHeadAttention init(std::size_t d_model, std::size_t n_heads, Rng& rng);
  /// x_q [B, Lq, D], x_kv [B, Lk, D] -> [B, Lq, D]
  Tensor forward(const Tensor& x_q, const Tensor& x_kv, bool causal, bool probsparse,
                 const ProbSparseOptions& options, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
  void zero();
};

// ---------------------------------------------------------------------------
// Embedding

/// Sinusoidal table [length, d_model]: sin on even columns, cos on odd.
Tensor positional_encoding(std::size_t length, std::size_t d_model);

/// Temporal feature of a timestamp: second-of-minute scaled to [-0.5, 0.5].
double temporal_feature(double timestamp_s);

/// value (circular conv, width 3) + positional + temporal (affine of one
/// time feature per slot).
struct DataEmbedding {
  Tensor value_kernel;  // [3, input_dim, d_model]
  Linear temporal;      // 1 -> d_model

  static DataEmbedding init(std::size_t input_dim, std::size_t d_model, Rng& rng);
  /// x [B, L, input_dim], marks [B, L, 1] -> [B, L, d_model]
  Tensor forward(const Tensor& x, const Tensor& marks) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// ---------------------------------------------------------------------------
// Encoder / decoder

struct FeedForward {
  Linear expand, contract;

  static FeedForward init(std::size_t d_model, std::size_t d_ff, Rng& rng);
  Tensor forward(const Tensor& x, double dropout_rate, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
  void zero();
};

struct EncoderLayer {
  MultiHeadAttention attention;
  FeedForward ff;
  LayerNorm norm1, norm2;

  static EncoderLayer init(const InformerConfig& cfg, Rng& rng);
  /// x + SelfAttention(x) -> norm -> x + FeedForward(x) -> norm
  Tensor forward(const Tensor& x, const InformerConfig& cfg, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// conv1d (width 3, circular) -> ELU -> max-pool (width 3, stride 2, pad 1).
struct DistillLayer {
  Tensor kernel;  // [3, d_model, d_model]
  Tensor bias;    // [d_model]

  static DistillLayer init(std::size_t d_model, Rng& rng);
  /// Length L -> ceil(L / 2); L == 1 passes through.
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct DecoderLayer {
  MultiHeadAttention self_attention;
  MultiHeadAttention cross_attention;
  FeedForward ff;
  LayerNorm norm1, norm2, norm3;

  static DecoderLayer init(const InformerConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& memory, const InformerConfig& cfg, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Zero-padded decoder input: the last `label_len` slots of `x` [B, T, C]
/// followed by `t_out` zero slots.
Tensor build_decoder_input(const Tensor& x, std::size_t label_len, std::size_t t_out);

class Informer {
 public:
  Informer(const InformerConfig& config, Rng& rng);

  Tensor embed_encoder(const Tensor& x, const Tensor& marks) const { return enc_embedding_.forward(x, marks); }
  Tensor embed_decoder(const Tensor& x, const Tensor& marks) const { return dec_embedding_.forward(x, marks); }

  /// Encoder layers with a distillation step between consecutive layers,
  /// then a final layer norm.
  Tensor encode(const Tensor& embedded, ForwardContext& ctx) const;
  /// Decoder layers over the embedded decoder input, then a final layer norm.
  Tensor decode(const Tensor& dec_embedded, const Tensor& enc_out, ForwardContext& ctx) const;
  /// Affine d_model -> 1 per position; keeps the last t_out positions. [B, t_out]
  Tensor project_output(const Tensor& dec_out, std::size_t t_out) const;

  /// enc_in [B, T_in, C], dec_in [B, label_len + t_out, C] -> [B, t_out]
  Tensor forward(const Tensor& enc_in, const Tensor& enc_marks, const Tensor& dec_in, const Tensor& dec_marks,
                 std::size_t t_out, ForwardContext& ctx) const;

  const InformerConfig& config() const { return config_; }
  InformerConfig& mutable_config() { return config_; }
  std::vector<EncoderLayer>& encoder_layers() { return encoder_layers_; }
  std::vector<DecoderLayer>& decoder_layers() { return decoder_layers_; }
  Linear& output_head() { return projection_; }
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  InformerConfig config_;
  DataEmbedding enc_embedding_;
  DataEmbedding dec_embedding_;
  std::vector<EncoderLayer> encoder_layers_;
  std::vector<DistillLayer> distill_layers_;
  LayerNorm encoder_norm_;
  std::vector<DecoderLayer> decoder_layers_;
  LayerNorm decoder_norm_;
  Linear projection_;
};

}  // namespace ginet

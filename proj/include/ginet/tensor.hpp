#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ginet/rng.hpp"

namespace ginet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense row-major tensor of doubles with reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share storage. Every operation in this
/// header produces a new tensor and, when gradient recording is enabled and
/// any input requires a gradient, records how to propagate gradients back to
/// its inputs. Calling backward() on a scalar walks that record in reverse
/// topological order, accumulates into leaf gradients, and then releases the
/// intermediate nodes.
class Tensor {
 public:
  /// Undefined handle; used for optional operands such as a missing bias.
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Mutable access for leaves (parameter updates, test perturbation).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  /// Same storage values, no graph history.
  Tensor detach() const;
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Populates grad on every requires_grad leaf reachable from `loss`.
void backward(const Tensor& loss);

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Scalar multiply-accumulate counter, per thread. matmul, batched matmul and
/// conv1d add to it; attention kernels add their own sampled-score work.
struct OpCounter {
  static std::uint64_t value();
  static void reset();
  static void add(std::uint64_t n);
};

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Activations
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor elu(const Tensor& x, double alpha = 1.0);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[..., m, k] x b[..., k, n] (or b[..., n, k] transposed) with equal leading dims.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// x[..., in] W[in, out] + bias[out]; bias may be empty.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

// Normalization and probability
Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Sets scores[n, i, j] to -inf for j > position(n, i). `query_positions` holds
/// one position per (n, i) row; empty means position(n, i) = i.
Tensor causal_mask(const Tensor& scores, std::span<const std::size_t> query_positions = {});

// Shape manipulation
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Slice of width one with the axis removed.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);
/// x[N, L, d], rows[N * u] -> [N, u, d]
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t rows_per_batch);
/// base[N, L, d] with rows replaced by src[N, u, d].
Tensor scatter_rows(const Tensor& base, const Tensor& src, std::span<const std::size_t> rows);
/// v[N, L, d] -> [N, out_rows, d]; each row is the mean of v over all L rows,
/// or over rows 0..i when cumulative.
Tensor mean_rows(const Tensor& v, std::size_t out_rows, bool cumulative);

// Convolution / pooling over [batch, length, channels]
enum class Padding { Zero, Circular };
Tensor conv1d(const Tensor& x, const Tensor& kernel, Padding padding);
Tensor max_pool1d(const Tensor& x, std::size_t width, std::size_t stride, std::size_t pad);

/// Inverted dropout; callers skip it in eval mode.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace ginet

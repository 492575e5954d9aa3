#include "ginet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ginet/error.hpp"

namespace ginet {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_op_count = 0;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const auto& t : inputs) node->parents.push_back(t.defined() ? t.node() : nullptr);
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

bool wants(const Node& self, std::size_t i) {
  return self.parents[i] && self.parents[i]->requires_grad;
}

std::vector<double>& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank_at_least(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() < rank) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(rank) +
                         ", got " + shape_str(x.shape()));
  }
}

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx](Node& self) {
    auto& g = pgrad(self, 0);
    const auto& xin = self.parents[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(xin[i], self.data[i]);
  });
}

// Outer/axis/inner decomposition for axis-wise ops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(data), requires_grad);
}

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf) throw ContractError("mutable_data() is only available on leaf tensors");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank does not match " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw DimensionError("index out of range for " + shape_str(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = flag;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone() const { return from(shape(), node_->data, requires_grad() && node_->is_leaf); }

// ---------------------------------------------------------------------------
// Graph

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  const NodePtr& root = loss.node();
  if (root->consumed) throw ContractError("backward(): graph already consumed by a previous call");
  if (!root->requires_grad) throw ContractError("backward(): loss is detached from every parameter");

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        if (p->consumed) throw ContractError("backward(): graph already consumed by a previous call");
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf || n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
  for (Node* n : order) {
    if (n->is_leaf) continue;
    n->parents.clear();
    n->backward = nullptr;
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

std::uint64_t OpCounter::value() { return t_op_count; }
void OpCounter::reset() { t_op_count = 0; }
void OpCounter::add(std::uint64_t n) { t_op_count += n; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      auto& g = pgrad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bd[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + bias.data()[i % n];
  return make_result(x.shape(), std::move(out), {x, bias}, [n](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Activations

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& x, double alpha) {
  return unary(x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
               [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  OpCounter::add(static_cast<std::uint64_t>(m) * k * n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (wants(self, 0)) {
      gemm_nt(self.grad.data(), self.parents[1]->data.data(), pgrad(self, 0).data(), m, n, k);
    }
    if (wants(self, 1)) {
      gemm_tn(self.parents[0]->data.data(), self.grad.data(), pgrad(self, 1).data(), m, k, n);
    }
  });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank_at_least(a, 3, "batched_matmul");
  auto fail = [&] {
    throw DimensionError("batched_matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (transpose_b ? " (transposed)" : ""));
  };
  if (a.rank() != b.rank()) fail();
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (a.dim(i) != b.dim(i)) fail();
  }
  const std::size_t m = a.dim(r - 2), k = a.dim(r - 1);
  const std::size_t n = transpose_b ? b.dim(r - 2) : b.dim(r - 1);
  if ((transpose_b ? b.dim(r - 1) : b.dim(r - 2)) != k) fail();
  const std::size_t batch = a.numel() / (m * k);

  Shape shape(a.shape().begin(), a.shape().end() - 2);
  shape.push_back(m);
  shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    if (transpose_b) {
      gemm_nt(ad + t * m * k, bd + t * n * k, out.data() + t * m * n, m, k, n);
    } else {
      gemm_nn(ad + t * m * k, bd + t * k * n, out.data() + t * m * n, m, k, n);
    }
  }
  OpCounter::add(static_cast<std::uint64_t>(batch) * m * k * n);
  return make_result(std::move(shape), std::move(out), {a, b},
                     [batch, m, k, n, transpose_b](Node& self) {
    const double* ad = self.parents[0]->data.data();
    const double* bd = self.parents[1]->data.data();
    const double* g = self.grad.data();
    for (std::size_t t = 0; t < batch; ++t) {
      const double* gt = g + t * m * n;
      if (wants(self, 0)) {
        double* ga = pgrad(self, 0).data() + t * m * k;
        if (transpose_b) {
          gemm_nn(gt, bd + t * n * k, ga, m, n, k);
        } else {
          gemm_nt(gt, bd + t * k * n, ga, m, n, k);
        }
      }
      if (wants(self, 1)) {
        if (transpose_b) {
          gemm_tn(gt, ad + t * m * k, pgrad(self, 1).data() + t * n * k, m, n, k);
        } else {
          gemm_tn(ad + t * m * k, gt, pgrad(self, 1).data() + t * k * n, m, k, n);
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t in = weight.dim(0);
  Tensor flat = x.rank() == 2 ? x : reshape(x, {x.numel() / in, in});
  Tensor y = matmul(flat, weight);
  if (bias.defined()) y = add_bias(y, bias);
  if (x.rank() == 2) return y;
  Shape shape = x.shape();
  shape.back() = weight.dim(1);
  return reshape(y, std::move(shape));
}

// ---------------------------------------------------------------------------
// Normalization and probability

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax: empty axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  const double* in = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [n, rows](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.shape().back();
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != n || beta.dim(0) != n) {
    throw DimensionError("layer_norm: affine parameters do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* in = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (xr[j] - mu) * inv_std[r];
      out[r * n + j] = gamma.data()[j] * xhat[r * n + j] + beta.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const auto& gam = self.parents[1]->data;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = self.grad.data() + r * n;
      const double* xh = xhat.data() + r * n;
      if (wants(self, 1)) {
        auto& gg = pgrad(self, 1);
        for (std::size_t j = 0; j < n; ++j) gg[j] += dy[j] * xh[j];
      }
      if (wants(self, 2)) {
        auto& gb = pgrad(self, 2);
        for (std::size_t j = 0; j < n; ++j) gb[j] += dy[j];
      }
      if (wants(self, 0)) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = dy[j] * gam[j];
          mean_d += d;
          mean_dx += d * xh[j];
        }
        mean_d /= static_cast<double>(n);
        mean_dx /= static_cast<double>(n);
        auto& gx = pgrad(self, 0);
        for (std::size_t j = 0; j < n; ++j) {
          gx[r * n + j] += inv_std[r] * (dy[j] * gam[j] - mean_d - xh[j] * mean_dx);
        }
      }
    }
  });
}

Tensor causal_mask(const Tensor& scores, std::span<const std::size_t> query_positions) {
  require_rank_at_least(scores, 2, "causal_mask");
  const std::size_t lk = scores.shape().back();
  const std::size_t lq = scores.shape()[scores.rank() - 2];
  const std::size_t rows = scores.numel() / lk;
  if (!query_positions.empty() && query_positions.size() != rows) {
    throw DimensionError("causal_mask: expected " + std::to_string(rows) + " query positions");
  }
  std::vector<std::size_t> limit(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    limit[r] = query_positions.empty() ? r % lq : query_positions[r];
  }
  std::vector<double> out(scores.data().begin(), scores.data().end());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = limit[r] + 1; j < lk; ++j) out[r * lk + j] = kNegInf;
  }
  return make_result(scores.shape(), std::move(out), {scores},
                     [lk, rows, limit = std::move(limit)](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t stop = std::min(lk, limit[r] + 1);
      for (std::size_t j = 0; j < stop; ++j) g[r * lk + j] += self.grad[r * lk + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw DimensionError("permute: axis count does not match " + shape_str(x.shape()));
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  Shape shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r) throw DimensionError("permute: axis out of range");
    shape[i] = x.dim(axes[i]);
    src_strides[i] = in_strides[axes[i]];
  }
  // map[i] = flat source index of output element i
  std::vector<std::size_t> map(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < r; ++a) src += idx[a] * src_strides[a];
    map[i] = src;
    for (std::size_t a = r; a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[map[i]];
  return make_result(std::move(shape), std::move(out), {x}, [map = std::move(map)](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += self.grad[i];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") invalid for " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  const double* in = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in + (o * s.extent + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  }
  return make_result(std::move(shape), std::move(out), {x}, [s, start, length](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = g.data() + (o * s.extent + start) * s.inner;
      const double* src = self.grad.data() + o * length * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Tensor s = slice(x, axis, index, 1);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape.push_back(1);
  return reshape(s, std::move(shape));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (i != axis && p.dim(i) != ref[i]) {
        throw DimensionError("concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(p.shape()));
      }
    }
    total += p.dim(axis);
  }
  Shape shape = ref;
  shape[axis] = total;
  const AxisSplit s = split_at(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.dim(axis);
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(p.data().data() + o * ext * s.inner, ext * s.inner,
                  out.data() + (o * total + off) * s.inner);
    }
    off += ext;
  }
  return make_result(std::move(shape), std::move(out), parts,
                     [s, total, axis, offsets = std::move(offsets)](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (!wants(self, k)) continue;
      auto& g = pgrad(self, k);
      const std::size_t ext = self.parents[k]->shape[axis];
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = self.grad.data() + (o * total + offsets[k]) * s.inner;
        double* dst = g.data() + o * ext * s.inner;
        for (std::size_t i = 0; i < ext * s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    Shape shape = p.shape();
    if (axis > shape.size()) throw DimensionError("stack: axis out of range");
    shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(shape)));
  }
  return concat(expanded, axis);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t rows_per_batch) {
  require_rank_at_least(x, 3, "gather_rows");
  const std::size_t d = x.shape().back();
  const std::size_t len = x.shape()[x.rank() - 2];
  const std::size_t batch = x.numel() / (len * d);
  const std::size_t u = rows_per_batch;
  if (u == 0 || rows.size() != batch * u) throw DimensionError("gather_rows: index count mismatch");
  Shape shape = x.shape();
  shape[shape.size() - 2] = u;
  std::vector<std::size_t> src(rows.begin(), rows.end());
  std::vector<double> out(batch * u * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < u; ++j) {
      const std::size_t r = src[b * u + j];
      if (r >= len) throw DimensionError("gather_rows: row index out of range");
      std::copy_n(x.data().data() + (b * len + r) * d, d, out.data() + (b * u + j) * d);
    }
  }
  return make_result(std::move(shape), std::move(out), {x},
                     [batch, u, len, d, src = std::move(src)](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < u; ++j) {
        double* dst = g.data() + (b * len + src[b * u + j]) * d;
        const double* gs = self.grad.data() + (b * u + j) * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += gs[c];
      }
    }
  });
}

Tensor scatter_rows(const Tensor& base, const Tensor& src, std::span<const std::size_t> rows) {
  require_rank_at_least(base, 3, "scatter_rows");
  require_rank_at_least(src, 3, "scatter_rows");
  const std::size_t d = base.shape().back();
  const std::size_t len = base.shape()[base.rank() - 2];
  const std::size_t batch = base.numel() / (len * d);
  const std::size_t u = src.shape()[src.rank() - 2];
  if (src.shape().back() != d || src.numel() != batch * u * d || rows.size() != batch * u) {
    throw DimensionError("scatter_rows: " + shape_str(src.shape()) + " does not fit " +
                         shape_str(base.shape()));
  }
  std::vector<std::size_t> dst_rows(rows.begin(), rows.end());
  std::vector<double> out(base.data().begin(), base.data().end());
  std::vector<char> replaced(batch * len, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < u; ++j) {
      const std::size_t r = dst_rows[b * u + j];
      if (r >= len) throw DimensionError("scatter_rows: row index out of range");
      replaced[b * len + r] = 1;
      std::copy_n(src.data().data() + (b * u + j) * d, d, out.data() + (b * len + r) * d);
    }
  }
  return make_result(base.shape(), std::move(out), {base, src},
                     [batch, u, len, d, dst_rows = std::move(dst_rows),
                      replaced = std::move(replaced)](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t r = 0; r < batch * len; ++r) {
        if (replaced[r]) continue;
        for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[r * d + c];
      }
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < u; ++j) {
          const double* gs = self.grad.data() + (b * len + dst_rows[b * u + j]) * d;
          double* dst = g.data() + (b * u + j) * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += gs[c];
        }
      }
    }
  });
}

Tensor mean_rows(const Tensor& v, std::size_t out_rows, bool cumulative) {
  require_rank_at_least(v, 3, "mean_rows");
  const std::size_t d = v.shape().back();
  const std::size_t len = v.shape()[v.rank() - 2];
  const std::size_t batch = v.numel() / (len * d);
  if (out_rows == 0 || (cumulative && out_rows > len)) {
    throw DimensionError("mean_rows: cannot produce " + std::to_string(out_rows) + " rows from " +
                         shape_str(v.shape()));
  }
  Shape shape = v.shape();
  shape[shape.size() - 2] = out_rows;
  std::vector<double> out(batch * out_rows * d);
  const double* in = v.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> acc(d, 0.0);
    if (cumulative) {
      for (std::size_t i = 0; i < out_rows; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
          acc[c] += in[(b * len + i) * d + c];
          out[(b * out_rows + i) * d + c] = acc[c] / static_cast<double>(i + 1);
        }
      }
    } else {
      for (std::size_t l = 0; l < len; ++l) {
        for (std::size_t c = 0; c < d; ++c) acc[c] += in[(b * len + l) * d + c];
      }
      for (std::size_t i = 0; i < out_rows; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
          out[(b * out_rows + i) * d + c] = acc[c] / static_cast<double>(len);
        }
      }
    }
  }
  OpCounter::add(static_cast<std::uint64_t>(batch) * (cumulative ? out_rows : len) * d);
  return make_result(std::move(shape), std::move(out), {v},
                     [batch, len, d, out_rows, cumulative](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<double> acc(d, 0.0);
      if (cumulative) {
        // dv[l] = sum_{i >= l} dout[i] / (i + 1)
        for (std::size_t i = out_rows; i-- > 0;) {
          for (std::size_t c = 0; c < d; ++c) {
            acc[c] += self.grad[(b * out_rows + i) * d + c] / static_cast<double>(i + 1);
            g[(b * len + i) * d + c] += acc[c];
          }
        }
      } else {
        for (std::size_t i = 0; i < out_rows; ++i) {
          for (std::size_t c = 0; c < d; ++c) acc[c] += self.grad[(b * out_rows + i) * d + c];
        }
        for (std::size_t l = 0; l < len; ++l) {
          for (std::size_t c = 0; c < d; ++c) g[(b * len + l) * d + c] += acc[c] / static_cast<double>(len);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution / pooling

Tensor conv1d(const Tensor& x, const Tensor& kernel, Padding padding) {
  if (x.rank() != 3 || kernel.rank() != 3 || kernel.dim(1) != x.dim(2)) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " does not match kernel " +
                         shape_str(kernel.shape()));
  }
  const std::size_t width = kernel.dim(0);
  if (width % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(width));
  const std::size_t batch = x.dim(0), len = x.dim(1), cin = x.dim(2), cout = kernel.dim(2);
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);

  // Source row for (t, w), or -1 for a zero-padded position.
  auto source = [half, L, padding](std::size_t t, std::size_t w) -> std::ptrdiff_t {
    std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(w) - half;
    if (s >= 0 && s < L) return s;
    if (padding == Padding::Zero) return -1;
    return ((s % L) + L) % L;
  };

  std::vector<double> out(batch * len * cout, 0.0);
  const double* xd = x.data().data();
  const double* kd = kernel.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      double* orow = out.data() + (b * len + t) * cout;
      for (std::size_t w = 0; w < width; ++w) {
        const auto s = source(t, w);
        if (s < 0) continue;
        gemm_nn(xd + (b * len + static_cast<std::size_t>(s)) * cin, kd + w * cin * cout, orow, 1, cin,
                cout);
      }
    }
  }
  OpCounter::add(static_cast<std::uint64_t>(batch) * len * width * cin * cout);
  return make_result({batch, len, cout}, std::move(out), {x, kernel},
                     [batch, len, cin, cout, width, source](Node& self) {
    const double* xd = self.parents[0]->data.data();
    const double* kd = self.parents[1]->data.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const double* go = self.grad.data() + (b * len + t) * cout;
        for (std::size_t w = 0; w < width; ++w) {
          const auto s = source(t, w);
          if (s < 0) continue;
          const std::size_t row = (b * len + static_cast<std::size_t>(s)) * cin;
          if (wants(self, 0)) gemm_nt(go, kd + w * cin * cout, pgrad(self, 0).data() + row, 1, cout, cin);
          if (wants(self, 1)) gemm_tn(xd + row, go, pgrad(self, 1).data() + w * cin * cout, 1, cin, cout);
        }
      }
    }
  });
}

Tensor max_pool1d(const Tensor& x, std::size_t width, std::size_t stride, std::size_t pad) {
  if (x.rank() != 3) throw DimensionError("max_pool1d: expected [batch, length, channels], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (width == 0 || stride == 0 || len + 2 * pad < width) throw DimensionError("max_pool1d: window does not fit");
  const std::size_t out_len = (len + 2 * pad - width) / stride + 1;
  std::vector<double> out(batch * out_len * ch);
  std::vector<std::size_t> arg(out.size());
  const double* xd = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      const auto lo = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad);
      for (std::size_t c = 0; c < ch; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t w = 0; w < width; ++w) {
          const auto s = lo + static_cast<std::ptrdiff_t>(w);
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
          const std::size_t i = (b * len + static_cast<std::size_t>(s)) * ch + c;
          if (xd[i] > best) {
            best = xd[i];
            best_i = i;
          }
        }
        out[(b * out_len + t) * ch + c] = best;
        arg[(b * out_len + t) * ch + c] = best_i;
      }
    }
  }
  return make_result({batch, out_len, ch}, std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= rate ? keep : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {x}, [](Node& self) {
    auto& g = pgrad(self, 0);
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace ginet

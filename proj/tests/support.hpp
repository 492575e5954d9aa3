#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ginet/nn.hpp"

namespace ginet::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double bound = 2.0, bool requires_grad = true) {
  return Tensor::uniform(std::move(shape), -bound, bound, rng, requires_grad);
}

/// sum(y * w) for a fixed random w, so that every output element carries a
/// distinct weight into the loss.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  const Tensor w = Tensor::uniform(y.shape(), -1.0, 1.0, rng);
  return sum(mul(y, w));
}

inline constexpr double kGradFloor = 1e-5;

struct GradCheck {
  double worst = 0.0;          // max over tensors of |a - n| / (|a| + |n|)
  std::string worst_name;
  std::size_t evaluations = 0;
};

/// Central differences over every element of every tensor in `params`.
/// Per tensor the error is ||analytic - numeric|| / (||analytic|| + ||numeric||),
/// with the denominator floored at kGradFloor. `loss` must rebuild the graph on each call and be
/// deterministic.
inline GradCheck gradcheck(const ParamList& params, const std::function<Tensor()>& loss, double h = 1e-5) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  backward(loss());
  GradCheck result;
  NoGradGuard guard;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    auto data = t.mutable_data();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = loss().item();
      data[i] = orig - h;
      const double down = loss().item();
      data[i] = orig;
      result.evaluations += 2;
      const double numeric = (up - down) / (2.0 * h);
      diff += (numeric - analytic[i]) * (numeric - analytic[i]);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    // Some gradients vanish identically (a key bias shifts every score of a
    // query equally, which softmax ignores); the floor keeps their finite
    // difference noise from reading as a relative error near 1.
    const double denom = std::max(std::sqrt(na) + std::sqrt(nn), kGradFloor);
    const double rel = std::sqrt(diff) / denom;
    if (result.worst_name.empty() || rel > result.worst) {
      result.worst = rel;
      result.worst_name = p.name;
    }
  }
  return result;
}

inline ParamList named(std::initializer_list<Tensor> tensors) {
  ParamList out;
  std::size_t i = 0;
  for (const auto& t : tensors) out.push_back({"arg" + std::to_string(i++), t});
  return out;
}

}  // namespace ginet::test

#include "ginet/nn.hpp"

#include <algorithm>
#include <cmath>

namespace ginet {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = Tensor::uniform({in, out}, -bound, bound, rng, true);
  if (with_bias) l.bias = Tensor::uniform({out}, -bound, bound, rng, true);
  return l;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

void Linear::zero() {
  auto w = weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  if (bias.defined()) {
    auto b = bias.mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
}

LayerNorm LayerNorm::init(std::size_t dim, double eps) {
  return LayerNorm{Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true), eps};
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

}  // namespace ginet

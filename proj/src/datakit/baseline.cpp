#include "sdformer/datakit/baseline.hpp"

#include <limits>
#include <vector>

namespace sdformer {

Tensor<float> nearest_fill(const Tensor<float>& sparse) {
  const Index h = sparse.dim(1), w = sparse.dim(2);
  std::vector<Index> ys, xs;
  std::vector<float> values;
  for (Index i = 0; i < sparse.size(); ++i) {
    if (sparse[i] > 0) {
      ys.push_back(i / w);
      xs.push_back(i % w);
      values.push_back(sparse[i]);
    }
  }
  Tensor<float> out(sparse.shape());
  if (values.empty()) return out;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Index best = std::numeric_limits<Index>::max();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < values.size(); ++k) {
        const Index dy = ys[k] - y, dx = xs[k] - x, d = dy * dy + dx * dx;
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      out[y * w + x] = values[arg];
    }
  }
  return out;
}

}  // namespace sdformer

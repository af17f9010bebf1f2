#include "sdformer/datakit/sample.hpp"

#include <cmath>

#include "sdformer/error.hpp"

namespace sdformer {

void validate_sample(const Sample& s) {
  const std::string who = "sample " + (s.id.empty() ? std::string("<unnamed>") : s.id) + ": ";
  if (s.gt.rank() != 3 || s.gt.dim(0) != 1) throw FormatError(who + "gt must be 1xHxW, got " + s.gt.shape().str());
  const Index h = s.gt.dim(1), w = s.gt.dim(2);
  if (s.sparse.shape() != Shape{1, h, w}) throw FormatError(who + "sparse shape " + s.sparse.shape().str() + " != gt");
  if (s.rgb.shape() != Shape{3, h, w}) throw FormatError(who + "rgb shape " + s.rgb.shape().str() + " != 3x" +
                                                         std::to_string(h) + "x" + std::to_string(w));
  if (!s.rgb.all_finite() || !s.sparse.all_finite() || !s.gt.all_finite()) throw FormatError(who + "non-finite values");
  for (Index i = 0; i < s.gt.size(); ++i) {
    if (s.gt[i] < 0 || s.sparse[i] < 0) throw FormatError(who + "negative depth at pixel " + std::to_string(i));
    if (s.sparse[i] > 0 && s.sparse[i] != s.gt[i]) {
      throw FormatError(who + "sparse pixel " + std::to_string(i) + " does not match gt");
    }
  }
}

Tensor<float> valid_mask(const Tensor<float>& depth) {
  Tensor<float> mask(depth.shape());
  for (Index i = 0; i < depth.size(); ++i) mask[i] = depth[i] > 0 ? 1.0f : 0.0f;
  return mask;
}

}  // namespace sdformer

#include "sdformer/training/loss.hpp"

#include <cmath>

#include "sdformer/error.hpp"

namespace sdformer {

template <typename S>
Index valid_count(const Tensor<S>& mask) {
  Index n = 0;
  for (Index i = 0; i < mask.size(); ++i) n += mask[i] > 0;
  return n;
}

template <typename S>
Var<S> masked_error_sum(const Var<S>& pred, const Tensor<S>& gt, const Tensor<S>& mask) {
  if (pred.shape() != gt.shape() || mask.shape() != gt.shape()) {
    throw ConfigError("loss: shapes differ: pred " + pred.shape().str() + ", gt " + gt.shape().str() + ", mask " +
                      mask.shape().str());
  }
  double total = 0;
  const Tensor<S>& p = pred.value();
  for (Index i = 0; i < p.size(); ++i) {
    if (!(mask[i] > 0)) continue;
    const double e = double(p[i]) - double(gt[i]);
    total += std::abs(e) + e * e;
  }
  return make_var<S>("masked_error_sum", Tensor<S>::scalar(S(total)), {pred},
                     [pred, gt, mask](const Tensor<S>&, const Tensor<S>& g, GradientSlots<S>& slots) {
                       Tensor<S>* gp = slots[0];
                       if (!gp) return;
                       const S scale = g[0];
                       const Tensor<S>& p = pred.value();
                       for (Index i = 0; i < p.size(); ++i) {
                         if (!(mask[i] > 0)) continue;
                         const S e = p[i] - gt[i];
                         const S sign = e > 0 ? S(1) : (e < 0 ? S(-1) : S(0));
                         (*gp)[i] += scale * (sign + 2 * e);
                       }
                     });
}

template <typename S>
Var<S> completion_loss(const Var<S>& pred, const Tensor<S>& gt, const Tensor<S>& mask) {
  const Index n = valid_count(mask);
  if (n == 0) throw ConfigError("loss: mask has no valid pixels");
  return scale(masked_error_sum(pred, gt, mask), S(1) / S(n));
}

#define SDFORMER_INSTANTIATE_LOSS(S)                                                  \
  template Index valid_count(const Tensor<S>&);                                       \
  template Var<S> masked_error_sum(const Var<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Var<S> completion_loss(const Var<S>&, const Tensor<S>&, const Tensor<S>&);

SDFORMER_INSTANTIATE_LOSS(float)
SDFORMER_INSTANTIATE_LOSS(double)

}  // namespace sdformer

#pragma once
#include <algorithm>
#include <cmath>

#include "faultface/nn/ndarray.hpp"

namespace faultface::nn {

inline constexpr double kBceEps = 1e-7;

struct LossResult {
  double loss = 0.0;
  NdArray grad;
};

/// Mean binary cross-entropy over all elements; predictions are clamped to [eps, 1-eps].
inline LossResult loss_bce(const NdArray& pred, const NdArray& target) {
  if (pred.shape != target.shape)
    throw numeric_error("loss_bce: shape " + to_string(pred.shape) + " vs " + to_string(target.shape));
  if (pred.size() == 0) throw numeric_error("loss_bce: empty input");
  const double count = static_cast<double>(pred.size());
  LossResult r{0.0, NdArray(pred.shape)};
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kBceEps, 1.0 - kBceEps);
    const double t = target[i];
    acc += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    r.grad[i] = (p - t) / (p * (1.0 - p)) / count;
  }
  r.loss = -acc / count;
  return r;
}

}  // namespace faultface::nn

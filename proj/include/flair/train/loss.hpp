#pragma once

#include <array>
#include <cmath>
#include <type_traits>

#include "flair/data_model.hpp"
#include "flair/tensor.hpp"

namespace flair::train {

struct CeLoss {
  double value = 0.0;
  bool empty = false;  // every pixel had a zero-weight class
};

// Weighted pixel cross-entropy of (1, C, H, W) logits against an (H, W)
// canonical label raster. The reduction is the weighted mean over pixels
// with nonzero class weight; zero-weight pixels contribute neither loss nor
// gradient. Log-sum-exp runs in double regardless of T.
template <class T>
CeLoss ce_loss(const Tensor<T>& logits, const Tensor<uint8_t>& labels,
               const std::array<double, kNumClasses>& weights,
               typename std::type_identity<Tensor<T>>::type* grad) {
  if (logits.shape.size() != 4 || logits.shape[0] != 1 || logits.shape[1] != kNumClasses)
    throw data_error("ce_loss expects (1, " + std::to_string(kNumClasses) + ", H, W) logits, got " +
                     logits.shape_str());
  long h = logits.shape[2], w = logits.shape[3];
  if (labels.shape.size() != 2 || labels.shape[0] != h || labels.shape[1] != w)
    throw data_error("ce_loss labels must be (" + std::to_string(h) + "," + std::to_string(w) +
                     "), got " + labels.shape_str());

  long hw = h * w;
  if (grad) {
    grad->resize(logits.shape);
    grad->zero();
  }
  double lsum = 0.0, wsum = 0.0;
  for (long p = 0; p < hw; ++p) {
    int y = labels.data[size_t(p)];
    if (y < 1 || y > kNumClasses)
      throw invalid_label_error("label " + std::to_string(y) + " at pixel " + std::to_string(p) +
                                " outside canonical range 1.." + std::to_string(kNumClasses));
    double cw = weights[size_t(y - 1)];
    if (cw == 0.0) continue;
    double mx = -1e300;
    for (long c = 0; c < kNumClasses; ++c)
      mx = std::max(mx, double(logits.data[size_t(c * hw + p)]));
    double se = 0.0;
    for (long c = 0; c < kNumClasses; ++c)
      se += std::exp(double(logits.data[size_t(c * hw + p)]) - mx);
    double lse = mx + std::log(se);
    lsum += cw * (lse - double(logits.data[size_t((y - 1) * hw + p)]));
    wsum += cw;
    if (grad)
      for (long c = 0; c < kNumClasses; ++c) {
        double prob = std::exp(double(logits.data[size_t(c * hw + p)]) - mx) / se;
        grad->data[size_t(c * hw + p)] = T(cw * (prob - (c == y - 1 ? 1.0 : 0.0)));
      }
  }

  CeLoss out;
  if (wsum == 0.0) {
    out.empty = true;
    return out;  // grad is already zero
  }
  out.value = lsum / wsum;
  if (grad) {
    T inv = T(1.0 / wsum);
    for (auto& g : grad->data) g *= inv;
  }
  return out;
}

struct TTLoss {
  double total = 0.0;
  double aerial = 0.0;
  double sat = 0.0;
  bool aerial_empty = false;
  bool sat_empty = false;
};

// The two-branch objective: the plain sum of the aerial CE and the CE of the
// satellite logits brought onto the aerial grid, each with its branch's
// class weights. Pass an empty sat tensor when the temporal branch did not
// run; the sat term is then zero and flagged empty.
template <class T>
TTLoss tt_loss(const Tensor<T>& aerial_logits, const Tensor<T>& sat_logits_aerial,
               const Tensor<uint8_t>& labels, const Nomenclature& nomenclature,
               typename std::type_identity<Tensor<T>>::type* g_aerial,
               typename std::type_identity<Tensor<T>>::type* g_sat) {
  TTLoss r;
  CeLoss a = ce_loss(aerial_logits, labels, class_weights(nomenclature, Branch::aerial), g_aerial);
  r.aerial = a.value;
  r.aerial_empty = a.empty;
  if (sat_logits_aerial.empty()) {
    r.sat_empty = true;
    if (g_sat) *g_sat = {};
  } else {
    CeLoss s = ce_loss(sat_logits_aerial, labels, class_weights(nomenclature, Branch::sat), g_sat);
    r.sat = s.value;
    r.sat_empty = s.empty;
  }
  r.total = r.aerial + r.sat;
  return r;
}

}  // namespace flair::train

#include "flair/eval/metrics.hpp"

#include <cmath>
#include <limits>

namespace flair::eval {

ConfusionMatrix confusion(const Tensor<uint8_t>& pred, const LabelMask& target) {
  if (!target.canonical)
    throw data_error("confusion needs a canonical target; remap labels first");
  if (pred.shape != target.pixels.shape)
    throw data_error("prediction is " + pred.shape_str() + " but target is " +
                     target.pixels.shape_str());
  ConfusionMatrix m;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    int t = target.pixels.data[i];
    int p = pred.data[i];
    if (t < 1 || t > kNumClasses)
      throw invalid_label_error("target label " + std::to_string(t) + " outside 1.." +
                                std::to_string(kNumClasses));
    if (p < 1 || p > kNumClasses)
      throw invalid_label_error("predicted label " + std::to_string(p) + " outside 1.." +
                                std::to_string(kNumClasses));
    ++m.counts[size_t(t - 1)][size_t(p - 1)];
  }
  return m;
}

ConfusionMatrix aggregate(const std::vector<ConfusionMatrix>& matrices) {
  if (matrices.empty()) throw data_error("cannot aggregate an empty matrix list");
  ConfusionMatrix m = matrices.front();
  for (size_t i = 1; i < matrices.size(); ++i) m += matrices[i];
  return m;
}

std::array<double, kNumScoredClasses> per_class_iou(const ConfusionMatrix& m) {
  std::array<double, kNumScoredClasses> iou{};
  for (int c = 0; c < kNumScoredClasses; ++c) {
    long tp = m.counts[size_t(c)][size_t(c)];
    long row = 0, col = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      row += m.counts[size_t(c)][size_t(k)];
      col += m.counts[size_t(k)][size_t(c)];
    }
    long denom = row + col - tp;  // TP + FP + FN
    iou[size_t(c)] =
        denom == 0 ? std::numeric_limits<double>::quiet_NaN() : double(tp) / double(denom);
  }
  return iou;
}

double mean_iou(const std::array<double, kNumScoredClasses>& per_class) {
  double sum = 0.0;
  int n = 0;
  for (double v : per_class)
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  if (n == 0) throw data_error("mean IoU undefined: no class present in reference or prediction");
  return sum / double(n);
}

double mean_iou(const ConfusionMatrix& m) { return mean_iou(per_class_iou(m)); }

}  // namespace flair::eval

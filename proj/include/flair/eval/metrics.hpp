#pragma once

#include <array>
#include <vector>

#include "flair/data_model.hpp"
#include "flair/tensor.hpp"

namespace flair::eval {

// counts[reference][prediction], canonical classes 1..13 at indices 0..12.
struct ConfusionMatrix {
  std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

  long total() const {
    long n = 0;
    for (auto& row : counts)
      for (long v : row) n += v;
    return n;
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (int r = 0; r < kNumClasses; ++r)
      for (int c = 0; c < kNumClasses; ++c) counts[size_t(r)][size_t(c)] += o.counts[size_t(r)][size_t(c)];
    return *this;
  }
  bool operator==(const ConfusionMatrix& o) const { return counts == o.counts; }
};

// Canonical 1-based class raster from (1, C, H, W) or (C, H, W) logits.
// The lowest class index wins ties.
template <class T>
Tensor<uint8_t> argmax_classes(const Tensor<T>& logits) {
  size_t nd = logits.shape.size();
  if (nd != 3 && (nd != 4 || logits.shape[0] != 1))
    throw data_error("argmax expects (C, H, W) or (1, C, H, W) logits, got " + logits.shape_str());
  long c = logits.shape[nd - 3], h = logits.shape[nd - 2], w = logits.shape[nd - 1];
  long hw = h * w;
  Tensor<uint8_t> out({h, w});
  for (long p = 0; p < hw; ++p) {
    long best = 0;
    T bv = logits.data[size_t(p)];
    for (long k = 1; k < c; ++k) {
      T v = logits.data[size_t(k * hw + p)];
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    out.data[size_t(p)] = uint8_t(best + 1);
  }
  return out;
}

// Per-patch confusion counts; target must be canonical.
ConfusionMatrix confusion(const Tensor<uint8_t>& pred, const LabelMask& target);

// Element-wise sum; refuses an empty list.
ConfusionMatrix aggregate(const std::vector<ConfusionMatrix>& matrices);

// IoU of the 12 scored classes; a class absent from both reference and
// prediction gets NaN and is excluded from the mean. "other" is never scored.
std::array<double, kNumScoredClasses> per_class_iou(const ConfusionMatrix& m);

// Mean of the defined entries; refuses all-NaN input.
double mean_iou(const std::array<double, kNumScoredClasses>& per_class);
double mean_iou(const ConfusionMatrix& m);

}  // namespace flair::eval

#include <doctest.h>

#include <cmath>
#include <set>

#include "flair/eval/metrics.hpp"
#include "flair/rng.hpp"

using namespace flair;

namespace {

LabelMask mask_of(const Tensor<uint8_t>& px) {
  LabelMask m;
  m.pixels = px;
  m.canonical = true;
  return m;
}

Tensor<uint8_t> random_raster(long h, long w, Rng& rng) {
  Tensor<uint8_t> t({h, w});
  for (auto& v : t.data) v = uint8_t(rng.uniform_int(1, kNumClasses));
  return t;
}

// Set-based Jaccard oracle: |pixels(pred=c) ∩ pixels(ref=c)| over the union.
double set_iou(const Tensor<uint8_t>& pred, const Tensor<uint8_t>& ref, int cls) {
  std::set<long> u, v;
  for (long i = 0; i < pred.numel(); ++i) {
    if (pred.data[size_t(i)] == cls) u.insert(i);
    if (ref.data[size_t(i)] == cls) v.insert(i);
  }
  std::set<long> inter, uni;
  std::set_intersection(u.begin(), u.end(), v.begin(), v.end(),
                        std::inserter(inter, inter.begin()));
  std::set_union(u.begin(), u.end(), v.begin(), v.end(), std::inserter(uni, uni.begin()));
  if (uni.empty()) return std::numeric_limits<double>::quiet_NaN();
  return double(inter.size()) / double(uni.size());
}

}  // namespace

TEST_CASE("perfect prediction gives a diagonal matrix") {
  Rng rng(7);
  auto ref = random_raster(16, 16, rng);
  auto m = eval::confusion(ref, mask_of(ref));
  long trace = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    trace += m.counts[size_t(c)][size_t(c)];
    for (int k = 0; k < kNumClasses; ++k)
      if (k != c) CHECK(m.counts[size_t(c)][size_t(k)] == 0);
  }
  CHECK(trace == 256);
  CHECK(m.total() == 256);
}

TEST_CASE("single-class disagreement lands in one cell") {
  Tensor<uint8_t> pred({8, 8}), ref({8, 8});
  pred.fill(1);  // building
  ref.fill(5);   // water
  auto m = eval::confusion(pred, mask_of(ref));
  CHECK(m.counts[4][0] == 64);
  CHECK(m.total() == 64);
}

TEST_CASE("confusion equals a brute-force pixel count") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto pred = random_raster(8, 8, rng);
    auto ref = random_raster(8, 8, rng);
    auto m = eval::confusion(pred, mask_of(ref));
    for (int t = 1; t <= kNumClasses; ++t)
      for (int p = 1; p <= kNumClasses; ++p) {
        long n = 0;
        for (long i = 0; i < 64; ++i)
          if (ref.data[size_t(i)] == t && pred.data[size_t(i)] == p) ++n;
        CHECK(m.counts[size_t(t - 1)][size_t(p - 1)] == n);
      }
  }
}

TEST_CASE("aggregation equals confusion over concatenated rasters") {
  Rng rng(27);
  std::vector<eval::ConfusionMatrix> parts;
  Tensor<uint8_t> cat_pred({3 * 8, 8}), cat_ref({3 * 8, 8});
  for (int i = 0; i < 3; ++i) {
    auto pred = random_raster(8, 8, rng);
    auto ref = random_raster(8, 8, rng);
    parts.push_back(eval::confusion(pred, mask_of(ref)));
    std::copy(pred.data.begin(), pred.data.end(), cat_pred.data.begin() + i * 64);
    std::copy(ref.data.begin(), ref.data.end(), cat_ref.data.begin() + i * 64);
  }
  auto agg = eval::aggregate(parts);
  auto whole = eval::confusion(cat_pred, mask_of(cat_ref));
  CHECK(agg == whole);
}

TEST_CASE("aggregate of a single matrix is itself") {
  Rng rng(37);
  auto m = eval::confusion(random_raster(8, 8, rng), mask_of(random_raster(8, 8, rng)));
  CHECK(eval::aggregate({m}) == m);
}

TEST_CASE("empty aggregate list is refused") {
  CHECK_THROWS_AS(eval::aggregate({}), data_error);
}

TEST_CASE("per-class IoU matches the set-based Jaccard oracle") {
  Rng rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    auto pred = random_raster(8, 8, rng);
    auto ref = random_raster(8, 8, rng);
    auto iou = eval::per_class_iou(eval::confusion(pred, mask_of(ref)));
    for (int c = 1; c <= kNumScoredClasses; ++c) {
      double want = set_iou(pred, ref, c);
      if (std::isnan(want)) CHECK(std::isnan(iou[size_t(c - 1)]));
      else CHECK(iou[size_t(c - 1)] == want);  // both are exact integer ratios
    }
  }
}

TEST_CASE("diagonal matrix scores IoU 1 for present classes, NaN for absent") {
  eval::ConfusionMatrix m;
  m.counts[0][0] = 10;
  m.counts[4][4] = 3;
  auto iou = eval::per_class_iou(m);
  CHECK(iou[0] == 1.0);
  CHECK(iou[4] == 1.0);
  CHECK(std::isnan(iou[1]));
  CHECK(eval::mean_iou(iou) == 1.0);
}

TEST_CASE("absent classes are excluded from the mean") {
  eval::ConfusionMatrix m;
  m.counts[0][0] = 6;
  m.counts[1][0] = 2;  // class 2 never predicted correctly
  auto iou = eval::per_class_iou(m);
  CHECK(iou[0] == doctest::Approx(6.0 / 8.0));
  CHECK(iou[1] == 0.0);
  for (int c = 2; c < kNumScoredClasses; ++c) CHECK(std::isnan(iou[size_t(c)]));
  CHECK(eval::mean_iou(iou) == doctest::Approx((6.0 / 8.0 + 0.0) / 2.0));
}

TEST_CASE("the other class is never scored") {
  eval::ConfusionMatrix m;
  m.counts[size_t(kOtherClass - 1)][size_t(kOtherClass - 1)] = 100;
  m.counts[0][0] = 1;
  auto iou = eval::per_class_iou(m);
  CHECK(iou.size() == size_t(kNumScoredClasses));
  CHECK(eval::mean_iou(iou) == 1.0);  // only class 1 defined; "other" ignored
}

TEST_CASE("mean IoU with no defined class is an error") {
  eval::ConfusionMatrix m;  // all zero
  CHECK_THROWS_AS(eval::mean_iou(m), data_error);
}

TEST_CASE("argmax takes the lowest index on ties") {
  Tensor<double> logits({1, kNumClasses, 1, 2});
  logits.fill(0.5);                 // full tie -> class 1
  logits.data[size_t(3 * 2 + 1)] = 0.5;  // explicit tie between 1 and 4 at pixel 1
  auto pred = eval::argmax_classes(logits);
  CHECK(pred.data[0] == 1);
  CHECK(pred.data[1] == 1);

  logits.data[size_t(6 * 2 + 1)] = 2.0;  // class 7 wins pixel 1
  pred = eval::argmax_classes(logits);
  CHECK(pred.data[1] == 7);
}

TEST_CASE("argmax accepts 3-d logits and rejects other shapes") {
  Tensor<float> l3({kNumClasses, 2, 2});
  l3.fill(0.0f);
  l3.data[size_t(2 * 4 + 0)] = 1.0f;  // class 3 at pixel 0
  auto pred = eval::argmax_classes(l3);
  CHECK(pred.data[0] == 3);
  Tensor<float> bad({2, kNumClasses, 2, 2});
  CHECK_THROWS_AS(eval::argmax_classes(bad), data_error);
}

TEST_CASE("shape and canonicality are enforced") {
  Tensor<uint8_t> pred({4, 4}), ref({4, 5});
  pred.fill(1);
  ref.fill(1);
  CHECK_THROWS_AS(eval::confusion(pred, mask_of(ref)), data_error);
  LabelMask raw;
  raw.pixels = pred;
  raw.canonical = false;
  CHECK_THROWS_AS(eval::confusion(pred, raw), data_error);
}

TEST_CASE("published per-class row averages to its published mean") {
  std::array<double, kNumScoredClasses> row = {0.8009, 0.4727, 0.6988, 0.3076, 0.7985, 0.5758,
                                               0.7014, 0.2392, 0.6012, 0.4653, 0.5449, 0.3583};
  CHECK(std::abs(eval::mean_iou(row) - 0.5470) <= 0.0001);
}

#pragma once

#include <array>
#include <filesystem>

#include "flair/data_model.hpp"
#include "flair/eval/metrics.hpp"

namespace flair::eval {

namespace fs = std::filesystem;

// Everything derived from one aggregated confusion matrix. per_class_iou
// keeps NaN for classes absent from both reference and prediction; those
// rows render as empty cells and null JSON values downstream.
struct EvalReport {
  ConfusionMatrix matrix;
  std::array<double, kNumScoredClasses> per_class_iou{};
  double miou = 0.0;
  // Rows normalized to sum 1; a class never seen in the reference keeps an
  // all-zero row.
  std::array<std::array<double, kNumClasses>, kNumClasses> normalized{};
  std::array<long, kNumClasses> reference_pixels{};
  std::array<double, kNumClasses> reference_percent{};
  long pixel_count = 0;
};

EvalReport build_report(const ConfusionMatrix& matrix);

// Writes the report artifacts into out_dir: metrics.json (per-class IoU by
// class name, mean IoU, pixel count), per_class_iou.csv,
// class_frequency.csv, and confusion.png (row-normalized heatmap, one cell
// per class pair).
void write_report(const fs::path& out_dir, const EvalReport& report,
                  const Nomenclature& nomenclature);

}  // namespace flair::eval

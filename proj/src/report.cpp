#include "flair/eval/report.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "flair/errors.hpp"
#include "flair/io/png.hpp"

namespace flair::eval {

namespace {

// Dark blue through yellow, value in [0, 1]. Cheap fixed ramp; only relative
// magnitude matters in the heatmap.
void heat_color(double v, uint8_t& r, uint8_t& g, uint8_t& b) {
  v = std::clamp(v, 0.0, 1.0);
  r = uint8_t(std::lround(20 + 235 * v));
  g = uint8_t(std::lround(24 + 210 * v));
  b = uint8_t(std::lround(84 - 54 * v));
}

}  // namespace

EvalReport build_report(const ConfusionMatrix& matrix) {
  EvalReport rep;
  rep.matrix = matrix;
  rep.per_class_iou = per_class_iou(matrix);
  rep.miou = mean_iou(rep.per_class_iou);
  rep.pixel_count = matrix.total();

  for (int r = 0; r < kNumClasses; ++r) {
    long row = 0;
    for (int c = 0; c < kNumClasses; ++c) row += matrix.counts[size_t(r)][size_t(c)];
    rep.reference_pixels[size_t(r)] = row;
    rep.reference_percent[size_t(r)] =
        rep.pixel_count > 0 ? 100.0 * double(row) / double(rep.pixel_count) : 0.0;
    if (row > 0)
      for (int c = 0; c < kNumClasses; ++c)
        rep.normalized[size_t(r)][size_t(c)] =
            double(matrix.counts[size_t(r)][size_t(c)]) / double(row);
  }
  return rep;
}

void write_report(const fs::path& out_dir, const EvalReport& report,
                  const Nomenclature& nomenclature) {
  fs::create_directories(out_dir);

  nlohmann::json per_class = nlohmann::json::object();
  for (int k = 0; k < kNumScoredClasses; ++k) {
    double v = report.per_class_iou[size_t(k)];
    const std::string& name = nomenclature.classes[size_t(k)].name;
    if (std::isnan(v)) per_class[name] = nullptr;
    else per_class[name] = v;
  }
  nlohmann::json metrics = {{"miou", report.miou},
                            {"per_class_iou", per_class},
                            {"pixel_count", report.pixel_count}};
  std::ofstream mj(out_dir / "metrics.json", std::ios::trunc);
  if (!mj) throw error("cannot open " + (out_dir / "metrics.json").string());
  mj << metrics.dump(2) << "\n";

  std::ofstream iou_csv(out_dir / "per_class_iou.csv", std::ios::trunc);
  if (!iou_csv) throw error("cannot open " + (out_dir / "per_class_iou.csv").string());
  iou_csv << "class,iou\n";
  for (int k = 0; k < kNumScoredClasses; ++k) {
    double v = report.per_class_iou[size_t(k)];
    iou_csv << nomenclature.classes[size_t(k)].name << ",";
    if (std::isnan(v)) iou_csv << "\n";
    else iou_csv << v << "\n";
  }

  std::ofstream freq_csv(out_dir / "class_frequency.csv", std::ios::trunc);
  if (!freq_csv) throw error("cannot open " + (out_dir / "class_frequency.csv").string());
  freq_csv << "class,pixels,percent\n";
  for (int k = 0; k < kNumClasses; ++k)
    freq_csv << nomenclature.classes[size_t(k)].name << "," << report.reference_pixels[size_t(k)]
             << "," << report.reference_percent[size_t(k)] << "\n";

  // One cell per (reference, prediction) pair, scaled up for visibility.
  constexpr long kCell = 24;
  long side = kNumClasses * kCell;
  Tensor<uint8_t> img({side, side, 3});
  for (int r = 0; r < kNumClasses; ++r)
    for (int c = 0; c < kNumClasses; ++c) {
      uint8_t cr, cg, cb;
      heat_color(report.normalized[size_t(r)][size_t(c)], cr, cg, cb);
      for (long y = 0; y < kCell; ++y)
        for (long x = 0; x < kCell; ++x) {
          long row = r * kCell + y, col = c * kCell + x;
          uint8_t* px = img.ptr() + (row * side + col) * 3;
          px[0] = cr;
          px[1] = cg;
          px[2] = cb;
        }
    }
  io::write_png_rgb(out_dir / "confusion.png", img);
}

}  // namespace flair::eval

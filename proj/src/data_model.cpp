#include "flair/data_model.hpp"

#include <cstdio>

namespace flair {

int CalendarDate::day_of_year() const {
  static const int cum[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
  int doy = cum[month - 1] + day;
  bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  if (leap && month > 2) doy += 1;
  return doy;
}

CalendarDate CalendarDate::parse_compact(const std::string& yyyymmdd) {
  if (yyyymmdd.size() != 8) throw format_error("bad compact date '" + yyyymmdd + "'");
  for (char c : yyyymmdd)
    if (c < '0' || c > '9') throw format_error("bad compact date '" + yyyymmdd + "'");
  CalendarDate d;
  d.year = std::stoi(yyyymmdd.substr(0, 4));
  d.month = std::stoi(yyyymmdd.substr(4, 2));
  d.day = std::stoi(yyyymmdd.substr(6, 2));
  static const int days_in[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (d.month < 1 || d.month > 12) throw format_error("bad compact date '" + yyyymmdd + "'");
  bool leap = (d.year % 4 == 0 && d.year % 100 != 0) || d.year % 400 == 0;
  int dmax = days_in[d.month - 1] + (leap && d.month == 2 ? 1 : 0);
  if (d.day < 1 || d.day > dmax) throw format_error("bad compact date '" + yyyymmdd + "'");
  return d;
}

std::string CalendarDate::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

void SentinelSeries::validate() const {
  if (data.shape.size() != 4 || data.shape[1] != kSenBands)
    throw format_error("sentinel data for " + area_id + ": expected T x 10 x H x W, found " +
                       data.shape_str());
  if (masks.shape.size() != 4 || masks.shape[1] != 2)
    throw format_error("sentinel masks for " + area_id + ": expected T x 2 x H x W, found " +
                       masks.shape_str());
  long td = data.shape[0], tm = masks.shape[0], tp = static_cast<long>(products.size());
  if (td != tm || td != tp)
    throw consistency_error("sentinel series " + area_id + ": length mismatch, data T=" +
                            std::to_string(td) + " masks T=" + std::to_string(tm) +
                            " products T=" + std::to_string(tp));
  if (data.shape[2] != masks.shape[2] || data.shape[3] != masks.shape[3])
    throw consistency_error("sentinel series " + area_id + ": data is " + data.shape_str() +
                            " but masks are " + masks.shape_str());
  for (uint8_t v : masks.data)
    if (v > 100)
      throw format_error("sentinel masks for " + area_id + ": value " + std::to_string(int(v)) +
                         " outside [0, 100]");
}

Nomenclature Nomenclature::flair() {
  Nomenclature n;
  n.classes = {
      {1, "building", "#db0e9a", 1.0, 1.0},
      {2, "pervious surface", "#938e7b", 1.0, 1.0},
      {3, "impervious surface", "#f80c00", 1.0, 1.0},
      {4, "bare soil", "#a97101", 1.0, 1.0},
      {5, "water", "#1553ae", 1.0, 1.0},
      {6, "coniferous", "#194a26", 1.0, 1.0},
      {7, "deciduous", "#46e483", 1.0, 1.0},
      {8, "brushwood", "#f3a60d", 1.0, 1.0},
      {9, "vineyard", "#660082", 1.0, 1.0},
      {10, "herbaceous vegetation", "#55ff00", 1.0, 1.0},
      {11, "agricultural land", "#fff30d", 1.0, 1.0},
      {12, "plowed land", "#e4df7c", 1.0, 0.0},
      {13, "other", "#000000", 0.0, 0.0},
  };
  return n;
}

LabelMask remap_labels(const LabelMask& mask) {
  LabelMask out;
  out.id = mask.id;
  out.pixels = mask.pixels;
  long h = mask.pixels.shape.at(0), w = mask.pixels.shape.at(1);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      uint8_t v = out.pixels.at2(r, c);
      if (v < 1 || v > kRawLabelMax)
        throw invalid_label_error("label value " + std::to_string(int(v)) + " outside [1, 19] at pixel (" +
                                  std::to_string(r) + ", " + std::to_string(c) + ")" +
                                  (mask.id.empty() ? "" : " in " + mask.id));
      if (v >= kOtherClass) out.pixels.at2(r, c) = kOtherClass;
    }
  }
  out.canonical = true;
  return out;
}

std::array<double, kNumClasses> class_weights(const Nomenclature& nomenclature, Branch branch) {
  std::array<double, kNumClasses> w{};
  for (const auto& c : nomenclature.classes)
    w[static_cast<size_t>(c.value - 1)] = branch == Branch::aerial ? c.aerial_weight : c.sat_weight;
  return w;
}

}  // namespace flair

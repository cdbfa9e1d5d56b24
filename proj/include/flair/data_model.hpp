#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flair/tensor.hpp"

namespace flair {

inline constexpr int kNumClasses = 13;       // canonical nomenclature size
inline constexpr int kNumScoredClasses = 12; // "other" is never scored
inline constexpr int kOtherClass = 13;
inline constexpr int kPlowedLandClass = 12;
inline constexpr int kRawLabelMax = 19;
inline constexpr long kPatchSize = 512;
inline constexpr int kAerialBands = 5;   // blue, green, red, near-infrared, elevation
inline constexpr int kSenBands = 10;

struct PatchMetadata {
  std::string acquisition_date;  // ISO yyyy-mm-dd
  std::string acquisition_time;  // hh:mm:ss
  double x = 0.0;                // easting, meters
  double y = 0.0;                // northing, meters
  double z = 0.0;                // mean altitude, meters
  std::string camera;
};

struct AerialPatch {
  std::string id;                 // IMG_<number>
  Tensor<uint8_t> pixels;         // 5 x 512 x 512
  std::optional<PatchMetadata> metadata;
};

struct CalendarDate {
  int year = 0;
  int month = 0;  // 1..12
  int day = 0;    // 1..31

  auto operator<=>(const CalendarDate&) const = default;

  int day_of_year() const;
  static CalendarDate parse_compact(const std::string& yyyymmdd);  // "20210315"
  std::string iso() const;
};

enum class Platform { S2A, S2B };

struct AcquisitionRecord {
  Platform platform = Platform::S2A;
  CalendarDate date;
  std::string time;   // hhmmss
  int orbit = 0;
  std::string tile;
  std::string product_name;
};

struct SentinelSeries {
  std::string area_id;             // domain_year-areanumber_letters
  Tensor<uint16_t> data;           // T x 10 x H x W reflectances
  Tensor<uint8_t> masks;           // T x 2 x H x W, channel 0 snow, 1 cloud, values 0..100
  std::vector<AcquisitionRecord> products;

  long t() const { return data.shape.empty() ? 0 : data.shape[0]; }
  long height() const { return data.shape.size() == 4 ? data.shape[2] : 0; }
  long width() const { return data.shape.size() == 4 ? data.shape[3] : 0; }

  // Throws consistency_error / format_error when the triple disagrees.
  void validate() const;
};

struct LabelMask {
  std::string id;          // MSK_<number>
  Tensor<uint8_t> pixels;  // 512 x 512
  bool canonical = false;  // true once remapped to 1..13
};

struct ClassDef {
  int value = 0;          // canonical value 1..13
  std::string name;
  std::string color;      // "#rrggbb", rendering only
  double aerial_weight = 1.0;
  double sat_weight = 1.0;
};

struct Nomenclature {
  std::vector<ClassDef> classes;  // exactly 13, ordered by value

  static Nomenclature flair();    // the main 12+other nomenclature

  const ClassDef& at_value(int value) const { return classes.at(static_cast<size_t>(value - 1)); }
};

enum class Branch { aerial, sat };

struct SuperPatchIndex {
  struct Centroid {
    long row = 0;
    long col = 0;
  };
  std::map<std::string, Centroid> entries;  // aerial patch id -> centroid
};

// Maps a raw label raster (values 1..19) onto the canonical 13-class
// nomenclature: values >= 13 collapse into "other". Throws
// invalid_label_error (naming value and pixel) for anything outside 1..19.
LabelMask remap_labels(const LabelMask& mask);

// Per-class loss weight vector for one branch, index 0 <-> class 1.
std::array<double, kNumClasses> class_weights(const Nomenclature& nomenclature, Branch branch);

}  // namespace flair

#pragma once

#include <utility>
#include <vector>

#include "flair/data_model.hpp"

namespace flair::prep {

struct FilterConfig {
  int prob_threshold = 50;          // mask value scale 0..100
  double coverage_threshold = 0.60;

  void validate() const;
};

// Monthly composites. Reflectance means are kept in double so a composite of
// identical frames reproduces them exactly.
struct CompositeSeries {
  std::string area_id;
  Tensor<double> data;                        // M x 10 x S x S
  std::vector<std::pair<int, int>> months;    // (year, month), chronological
  std::vector<long> counts;                   // contributing dates per month

  long m() const { return data.shape.empty() ? 0 : data.shape[0]; }
};

// Drops dates where any pixel is zero across all 10 bands. Throws data_error
// when nothing survives.
SentinelSeries filter_nodata(const SentinelSeries& series);

// Fraction of pixels whose max(snow, cloud) strictly exceeds the threshold.
// frame is one date's 2 x S x S mask stack.
double cloud_fraction(const Tensor<uint8_t>& masks, long t, int prob_threshold);

// Drops dates whose cloud_fraction reaches coverage_threshold. Throws
// data_error when nothing survives.
SentinelSeries filter_cloud_snow(const SentinelSeries& series, const FilterConfig& config);

// Means over the filter-passing dates of each (year, month) group; months
// without a single passing date are omitted. Throws data_error when no month
// survives.
CompositeSeries monthly_average(const SentinelSeries& series, const FilterConfig& config);

// Index of the date with the lowest cloud_fraction, first on ties. The
// pipeline falls back to this date when filtering would empty a series.
long least_cloudy_date(const SentinelSeries& series, int prob_threshold);

}  // namespace flair::prep

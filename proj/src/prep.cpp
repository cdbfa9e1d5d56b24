#include "flair/prep.hpp"

#include <algorithm>
#include <map>

namespace flair::prep {

namespace {

SentinelSeries keep_dates(const SentinelSeries& series, const std::vector<long>& keep) {
  long s = series.height() * series.width();
  SentinelSeries out;
  out.area_id = series.area_id;
  out.data.resize({long(keep.size()), kSenBands, series.height(), series.width()});
  out.masks.resize({long(keep.size()), 2, series.height(), series.width()});
  for (size_t i = 0; i < keep.size(); ++i) {
    long t = keep[i];
    std::copy_n(series.data.ptr() + t * kSenBands * s, kSenBands * s,
                out.data.ptr() + long(i) * kSenBands * s);
    std::copy_n(series.masks.ptr() + t * 2 * s, 2 * s, out.masks.ptr() + long(i) * 2 * s);
    out.products.push_back(series.products[size_t(t)]);
  }
  return out;
}

}  // namespace

void FilterConfig::validate() const {
  if (prob_threshold < 0 || prob_threshold > 100)
    throw validation_error("filter.prob_threshold " + std::to_string(prob_threshold) +
                           " outside [0, 100]");
  if (coverage_threshold < 0.0 || coverage_threshold > 1.0)
    throw validation_error("filter.coverage_threshold " + std::to_string(coverage_threshold) +
                           " outside [0, 1]");
}

SentinelSeries filter_nodata(const SentinelSeries& series) {
  series.validate();
  long t_len = series.t(), s = series.height() * series.width();
  std::vector<long> keep;
  for (long t = 0; t < t_len; ++t) {
    const uint16_t* frame = series.data.ptr() + t * kSenBands * s;
    bool has_nodata = false;
    for (long p = 0; p < s && !has_nodata; ++p) {
      bool all_zero = true;
      for (long b = 0; b < kSenBands && all_zero; ++b) all_zero = frame[b * s + p] == 0;
      has_nodata = all_zero;
    }
    if (!has_nodata) keep.push_back(t);
  }
  if (keep.empty())
    throw data_error("series " + series.area_id + ": every date has nodata pixels");
  if (long(keep.size()) == t_len) return series;
  return keep_dates(series, keep);
}

double cloud_fraction(const Tensor<uint8_t>& masks, long t, int prob_threshold) {
  long s = masks.shape[2] * masks.shape[3];
  const uint8_t* snow = masks.ptr() + t * 2 * s;
  const uint8_t* cloud = snow + s;
  long hit = 0;
  for (long p = 0; p < s; ++p)
    if (std::max(snow[p], cloud[p]) > prob_threshold) ++hit;
  return double(hit) / double(s);
}

SentinelSeries filter_cloud_snow(const SentinelSeries& series, const FilterConfig& config) {
  series.validate();
  config.validate();
  std::vector<long> keep;
  for (long t = 0; t < series.t(); ++t)
    if (cloud_fraction(series.masks, t, config.prob_threshold) < config.coverage_threshold)
      keep.push_back(t);
  if (keep.empty())
    throw data_error("series " + series.area_id + ": every date is cloud- or snow-covered");
  if (long(keep.size()) == series.t()) return series;
  return keep_dates(series, keep);
}

CompositeSeries monthly_average(const SentinelSeries& series, const FilterConfig& config) {
  series.validate();
  config.validate();
  long s = series.height() * series.width();

  // Group passing dates by (year, month); map order is already chronological.
  std::map<std::pair<int, int>, std::vector<long>> groups;
  for (long t = 0; t < series.t(); ++t) {
    if (cloud_fraction(series.masks, t, config.prob_threshold) >= config.coverage_threshold)
      continue;
    const CalendarDate& d = series.products[size_t(t)].date;
    groups[{d.year, d.month}].push_back(t);
  }
  if (groups.empty())
    throw data_error("series " + series.area_id + ": no month has a usable date");

  CompositeSeries out;
  out.area_id = series.area_id;
  out.data.resize({long(groups.size()), kSenBands, series.height(), series.width()});
  long m = 0;
  for (auto& [month, dates] : groups) {
    // Fixed accumulation order keeps composites exactly permutation-invariant.
    std::sort(dates.begin(), dates.end(), [&](long a, long b) {
      const auto& pa = series.products[size_t(a)];
      const auto& pb = series.products[size_t(b)];
      if (pa.date != pb.date) return pa.date < pb.date;
      if (pa.time != pb.time) return pa.time < pb.time;
      return pa.product_name < pb.product_name;
    });
    double* dst = out.data.ptr() + m * kSenBands * s;
    for (long t : dates) {
      const uint16_t* src = series.data.ptr() + t * kSenBands * s;
      for (long i = 0; i < kSenBands * s; ++i) dst[i] += double(src[i]);
    }
    for (long i = 0; i < kSenBands * s; ++i) dst[i] /= double(dates.size());
    out.months.push_back(month);
    out.counts.push_back(long(dates.size()));
    ++m;
  }
  return out;
}

long least_cloudy_date(const SentinelSeries& series, int prob_threshold) {
  if (series.t() == 0) throw data_error("series " + series.area_id + " has no dates");
  long best = 0;
  double best_frac = cloud_fraction(series.masks, 0, prob_threshold);
  for (long t = 1; t < series.t(); ++t) {
    double f = cloud_fraction(series.masks, t, prob_threshold);
    if (f < best_frac) {
      best = t;
      best_frac = f;
    }
  }
  return best;
}

}  // namespace flair::prep

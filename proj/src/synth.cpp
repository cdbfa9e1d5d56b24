#include "flair/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flair/rng.hpp"

namespace flair::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Scene classes 6 and 7 (coniferous/deciduous) render identically in the
// aerial bands; only their seasonal satellite profile tells them apart.
int visual_class(int canonical) { return canonical == 7 ? 6 : canonical; }

int aerial_base(int visual, long band) { return 40 + int((visual * 37 + band * 83) % 180); }

double sat_base(int canonical, long band) {
  return 0.06 + double((canonical * 53 + band * 29) % 40) / 100.0;
}

double seasonal_amplitude(int canonical) {
  switch (canonical) {
    case 6: return 0.03;   // evergreen: nearly flat
    case 7: return 0.45;   // deciduous: strong annual cycle
    case 10: return 0.30;
    case 11: return 0.35;
    case 12: return 0.50;
    case 5: return 0.01;
    default: return double((canonical * 19) % 20) / 100.0;
  }
}

int seasonal_phase(int canonical) { return (canonical * 61) % 365; }

double seasonal_factor(int canonical, int doy) {
  return 1.0 + seasonal_amplitude(canonical) *
                   std::sin(2.0 * kPi * double(doy - seasonal_phase(canonical)) / 365.0);
}

struct Site {
  double row = 0, col = 0;  // sat-grid units
  uint8_t raw = 1;          // on-disk label value 1..19
};

uint8_t canonical_of_raw(uint8_t raw) { return raw >= kOtherClass ? uint8_t(kOtherClass) : raw; }

uint8_t class_at(const std::vector<Site>& sites, double r, double c) {
  double best = 0;
  size_t best_i = 0;
  for (size_t i = 0; i < sites.size(); ++i) {
    double dr = sites[i].row - r, dc = sites[i].col - c;
    double d = dr * dr + dc * dc;
    if (i == 0 || d < best) {
      best = d;
      best_i = i;
    }
  }
  return sites[best_i].raw;
}

std::string area_letters(long idx) {
  std::string s;
  s += char('A' + (idx / 26) % 26);
  s += char('A' + idx % 26);
  return s;
}

std::string two(long v) { return (v < 10 ? "0" : "") + std::to_string(v); }

std::string six(long v) {
  std::string s = std::to_string(v);
  return std::string(s.size() >= 6 ? 0 : 6 - s.size(), '0') + s;
}

CalendarDate date_of_doy(int doy) {
  static const int len[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  CalendarDate d;
  d.year = 2021;
  d.month = 1;
  d.day = doy;
  for (int m = 0; m < 12 && d.day > len[m]; ++m) {
    d.day -= len[m];
    d.month = m + 2;
  }
  return d;
}

}  // namespace

long GenerateSpec::footprint() const {
  if (footprint_px > 0) return footprint_px;
  return std::max<long>(2, (patch_size + 25) / 50);
}

long GenerateSpec::resolved_val_domains() const {
  if (val_domains >= 0) return val_domains;
  return domains >= 2 ? 1 : 0;
}

void GenerateSpec::validate() const {
  std::vector<std::string> errs;
  if (domains < 1) errs.push_back("domains must be at least 1");
  if (areas_per_domain < 1) errs.push_back("areas per domain must be at least 1");
  if (patches_per_area < 1) errs.push_back("patches per area must be at least 1");
  if (t < 20 || t > 114)
    errs.push_back("t (acquisition dates) must lie in [20, 114], got " + std::to_string(t));
  if (patch_size < 8) errs.push_back("patch size must be at least 8 pixels");
  if (footprint_px < 0) errs.push_back("footprint must be positive (or 0 to derive it)");
  if (footprint_px > patch_size)
    errs.push_back("footprint cannot exceed the patch size in pixels");
  if (val_domains >= 0 && val_domains >= domains)
    errs.push_back("val domains must leave at least one train domain");
  if (temporal_pair && patches_per_area < 2)
    errs.push_back("temporal_pair needs at least 2 patches per area to place both classes");
  if (!errs.empty()) {
    std::string msg = "invalid generation spec:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw validation_error(msg);
  }
}

GenerateSummary generate_dataset(const fs::path& out, const GenerateSpec& spec, bool force) {
  spec.validate();
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force)
      throw validation_error("output directory " + out.string() +
                             " is not empty; pass --force to replace it");
    fs::remove_all(out);
  }
  fs::create_directories(out);

  Rng rng(spec.seed);
  const long fp = spec.footprint();
  const long H = spec.patch_size;
  const long grid = long(std::ceil(std::sqrt(double(spec.patches_per_area))));
  const long buffer = std::max<long>(5 * fp, 20);
  const long extent = grid * fp + 2 * buffer;
  const double sat_per_aerial = double(fp) / double(H);
  const long n_val = spec.resolved_val_domains();

  std::map<std::string, PatchMetadata> metadata;
  SuperPatchIndex centroids;
  long patch_counter = 0;

  for (long d = 0; d < spec.domains; ++d) {
    std::string domain = "D" + std::string(d + 1 < 100 ? (d + 1 < 10 ? "00" : "0") : "") +
                         std::to_string(d + 1) + "_2021";
    std::string split = d < spec.domains - n_val ? "train" : "val";

    for (long a = 0; a < spec.areas_per_domain; ++a) {
      std::string area = domain + "-Z" + std::to_string(a + 1) + "_" + area_letters(a);
      fs::path img_dir = out / "aerial" / split / domain / area / "img";
      fs::path msk_dir = out / "labels" / split / domain / area / "msk";
      fs::path sen_area = out / "sen" / split / domain / area;
      fs::create_directories(img_dir);
      fs::create_directories(msk_dir);

      // Scene: a nearest-site class field over the buffered area, in
      // sat-grid coordinates. Sites 0 and 1 pin down the evergreen and
      // deciduous classes so every area carries the seasonal contrast.
      long n_sites = std::max<long>(6, spec.patches_per_area * 3);
      std::vector<Site> sites(static_cast<size_t>(n_sites));
      for (auto& s : sites) {
        s.row = rng.uniform(0.0, double(extent));
        s.col = rng.uniform(0.0, double(extent));
        s.raw = uint8_t(rng.uniform(0.0, 1.0) < 0.1 ? rng.uniform_int(kOtherClass, kRawLabelMax)
                                                    : rng.uniform_int(1, kNumScoredClasses));
      }
      sites[0].raw = 6;
      sites[1].raw = 7;

      // temporal_pair: patch block (pr, pc) is all class 6 or all class 7 by
      // parity; everything outside the blocks is herbaceous background.
      auto pair_class_at = [&](double sr, double sc) -> uint8_t {
        long br = long(std::floor((sr - double(buffer)) / double(fp)));
        long bc = long(std::floor((sc - double(buffer)) / double(fp)));
        if (br < 0 || bc < 0 || br >= grid || bc >= grid) return 10;
        long idx = br * grid + bc;
        if (idx >= spec.patches_per_area) return 10;
        return idx % 2 == 0 ? 6 : 7;
      };
      auto raw_class_at = [&](double sr, double sc) -> uint8_t {
        return spec.temporal_pair ? pair_class_at(sr, sc) : class_at(sites, sr, sc);
      };

      // Class raster at sat resolution for the whole buffered extent.
      Tensor<uint8_t> cls_sat({extent, extent});
      for (long r = 0; r < extent; ++r)
        for (long c = 0; c < extent; ++c)
          cls_sat.at2(r, c) = canonical_of_raw(raw_class_at(double(r) + 0.5, double(c) + 0.5));

      // Acquisition calendar: t distinct days of 2021, sorted.
      std::set<int> days;
      while (long(days.size()) < spec.t) days.insert(int(rng.uniform_int(1, 365)));
      std::vector<int> doys(days.begin(), days.end());
      long overcast_idx = spec.clouds ? 1 : -1;
      long nodata_idx = 2;

      SentinelSeries series;
      series.area_id = area;
      series.data.resize({spec.t, kSenBands, extent, extent});
      series.masks.resize({spec.t, 2, extent, extent});

      for (long t = 0; t < spec.t; ++t) {
        int doy = doys[size_t(t)];
        CalendarDate date = date_of_doy(doy);

        // Masks first: channel 0 snow, channel 1 cloud, percent scale.
        bool winter = doy < 46 || doy > 335;
        double cloud_frac = t == overcast_idx ? 0.85 : rng.uniform(0.0, 0.35);
        double snow_frac = winter ? 0.08 : 0.0;
        if (!spec.clouds && t != overcast_idx) cloud_frac = 0.0;
        for (long r = 0; r < extent; ++r)
          for (long c = 0; c < extent; ++c) {
            uint8_t snow = 0, cloud = 0;
            if (snow_frac > 0 && rng.uniform(0.0, 1.0) < snow_frac)
              snow = uint8_t(rng.uniform_int(51, 100));
            else if (winter)
              snow = uint8_t(rng.uniform_int(0, 30));
            if (cloud_frac > 0 && rng.uniform(0.0, 1.0) < cloud_frac)
              cloud = uint8_t(rng.uniform_int(51, 100));
            else
              cloud = uint8_t(rng.uniform_int(0, 45));
            series.masks.data[size_t(((t * 2 + 0) * extent + r) * extent + c)] = snow;
            series.masks.data[size_t(((t * 2 + 1) * extent + r) * extent + c)] = cloud;
          }

        for (long b = 0; b < kSenBands; ++b)
          for (long r = 0; r < extent; ++r)
            for (long c = 0; c < extent; ++c) {
              int cls = cls_sat.at2(r, c);
              // In pair mode the two tree classes share their base level so
              // only the seasonal profile tells them apart.
              int base_cls = spec.temporal_pair && cls == 7 ? 6 : cls;
              double f = sat_base(base_cls, b) * seasonal_factor(cls, doy);
              f += rng.uniform(-0.02, 0.02);
              double cloud =
                  double(series.masks.data[size_t(((t * 2 + 1) * extent + r) * extent + c)]);
              f += cloud / 100.0 * 0.3;  // clouds brighten every band
              long v = std::lround(f * 10000.0);
              series.data.data[size_t(((t * kSenBands + b) * extent + r) * extent + c)] =
                  uint16_t(std::clamp<long>(v, 1, 10000));
            }

        if (t == nodata_idx) {
          long c0 = extent / 3, cw = std::max<long>(1, extent / 6);
          for (long b = 0; b < kSenBands; ++b)
            for (long r = 0; r < extent; ++r)
              for (long c = c0; c < c0 + cw; ++c)
                series.data.data[size_t(((t * kSenBands + b) * extent + r) * extent + c)] = 0;
        }

        AcquisitionRecord rec;
        rec.platform = t % 2 == 0 ? Platform::S2A : Platform::S2B;
        rec.date = date;
        rec.time = "10" + two(rng.uniform_int(0, 59)) + two(rng.uniform_int(0, 59));
        rec.orbit = 51;
        rec.tile = "31TCJ";
        std::string compact = std::to_string(date.year) + two(date.month) + two(date.day);
        rec.product_name = std::string(rec.platform == Platform::S2A ? "S2A" : "S2B") +
                           "_MSIL2A_" + compact + "T" + rec.time + "_N0400_R051_T31TCJ_" +
                           compact + "T120000";
        series.products.push_back(rec);
      }
      ds::write_sentinel(sen_area, series);

      // Patches: labels from the class field, textures from the labels.
      for (long p = 0; p < spec.patches_per_area; ++p) {
        long pr = p / grid, pc = p % grid;
        ++patch_counter;
        std::string num = six(patch_counter);

        LabelMask mask;
        mask.id = "IMG_" + num;
        mask.pixels.resize({H, H});
        AerialPatch patch;
        patch.id = "IMG_" + num;
        patch.pixels.resize({kAerialBands, H, H});

        // Pair mode re-forks the same stream for every patch and keeps the
        // elevation gradient patch-local, so every aerial raster is
        // byte-identical and only the labels and satellite series differ.
        Rng pair_rng = rng.fork("pair-aerial");
        Rng& tex_rng = spec.temporal_pair ? pair_rng : rng;
        for (long r = 0; r < H; ++r)
          for (long c = 0; c < H; ++c) {
            double sr = double(buffer) + (double(pr * H + r) + 0.5) * sat_per_aerial;
            double sc = double(buffer) + (double(pc * H + c) + 0.5) * sat_per_aerial;
            uint8_t raw = raw_class_at(sr, sc);
            mask.pixels.at2(r, c) = raw;
            int vis = visual_class(canonical_of_raw(raw));
            long cell = 4 + vis % 5;
            int checker = int(((r / cell) + (c / cell)) % 2) * 24;
            for (long b = 0; b < kAerialBands; ++b) {
              int base = aerial_base(vis, b);
              if (b == 4) {
                long grad_r = spec.temporal_pair ? r : pr * H + r;
                long grad_den = spec.temporal_pair ? H : grid * H;
                base = 60 + vis * 9 + int(grad_r * 40 / grad_den);
              }
              long v = base + checker + tex_rng.uniform_int(-8, 8);
              patch.pixels.data[size_t((b * H + r) * H + c)] =
                  uint8_t(std::clamp<long>(v, 0, 255));
            }
          }

        ds::write_aerial(img_dir / (patch.id + ".tif"), patch);
        ds::write_label(msk_dir / ("MSK_" + num + ".tif"), mask);

        centroids.entries[patch.id] = {buffer + pr * fp + fp / 2, buffer + pc * fp + fp / 2};

        PatchMetadata pm;
        pm.acquisition_date = "2021-" + two(4 + d % 6) + "-15";
        pm.acquisition_time = "10:" + two((p * 7) % 60) + ":" + two((p * 13) % 60);
        pm.x = 300000.0 + double(d) * 10000.0 + double(a) * 1000.0 + double(pc * H) * 0.2;
        pm.y = 6200000.0 + double(pr * H) * 0.2;
        pm.z = 80.0 + double((pr + pc) * 5);
        pm.camera = "UCE-M3";
        metadata[patch.id] = pm;
      }
    }
  }

  ds::write_metadata(out / "metadata_aerial.json", metadata);
  ds::write_centroids(out / "centroids_sp_to_patch.json", centroids);

  GenerateSummary summary;
  summary.patches = patch_counter;
  summary.train_domains = spec.domains - n_val;
  summary.val_domains = n_val;
  return summary;
}

}  // namespace flair::synth

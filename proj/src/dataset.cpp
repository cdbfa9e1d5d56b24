#include "flair/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flair/io/npy.hpp"
#include "flair/io/tiff.hpp"

namespace flair::ds {

using nlohmann::json;

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::exists(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> sorted_files(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::exists(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

const PatchEntry& DatasetManifest::find(const std::string& id) const {
  auto it = std::lower_bound(patches.begin(), patches.end(), id,
                             [](const PatchEntry& e, const std::string& v) { return e.id < v; });
  if (it == patches.end() || it->id != id)
    throw data_error("patch " + id + " not present in the " + split + " manifest");
  return *it;
}

std::string domain_of_area(const std::string& area_id) {
  auto dash = area_id.find('-');
  if (dash == std::string::npos || dash == 0)
    throw format_error("area id '" + area_id + "' does not match domain-area pattern");
  return area_id.substr(0, dash);
}

DatasetManifest scan_dataset(const fs::path& root, const std::string& split) {
  if (!fs::exists(root)) throw data_error("dataset root " + root.string() + " does not exist");
  if (split != "train" && split != "val" && split != "test")
    throw validation_error("unknown split '" + split + "', expected train, val or test");

  DatasetManifest m;
  m.root = root;
  m.split = split;
  bool labels_required = split == "train";

  fs::path aerial_split = root / "aerial" / split;
  if (!fs::exists(aerial_split))
    throw data_error("dataset has no aerial/" + split + " directory under " + root.string());

  for (const auto& domain : sorted_subdirs(aerial_split)) {
    m.domains.push_back(domain);
    for (const auto& area : sorted_subdirs(aerial_split / domain)) {
      if (domain_of_area(area) != domain)
        throw consistency_error("area " + area + " filed under domain " + domain);
      m.areas[domain].push_back(area);

      fs::path sen_dir = root / "sen" / split / domain / area;
      if (!fs::exists(sen_dir))
        throw consistency_error("area " + area + " has no sen/" + split + " counterpart");
      fs::path label_dir = root / "labels" / split / domain / area / "msk";
      if (labels_required && !fs::exists(label_dir))
        throw consistency_error("area " + area + " has no labels/" + split + " counterpart");

      for (const auto& f : sorted_files(aerial_split / domain / area / "img")) {
        if (f.rfind("IMG_", 0) != 0 || f.size() < 9 || f.substr(f.size() - 4) != ".tif") continue;
        PatchEntry e;
        e.id = f.substr(0, f.size() - 4);
        e.aerial_path = aerial_split / domain / area / "img" / f;
        e.area_id = area;
        e.domain = domain;
        std::string mask_name = "MSK_" + e.id.substr(4) + ".tif";
        fs::path mask_path = label_dir / mask_name;
        if (fs::exists(mask_path)) {
          e.label_path = mask_path;
        } else if (labels_required) {
          throw consistency_error("patch " + e.id + " in area " + area + " has no label mask " +
                                  mask_name);
        }
        m.patches.push_back(std::move(e));
      }
    }
  }
  std::sort(m.patches.begin(), m.patches.end(),
            [](const PatchEntry& a, const PatchEntry& b) { return a.id < b.id; });
  for (size_t i = 1; i < m.patches.size(); ++i)
    if (m.patches[i].id == m.patches[i - 1].id)
      throw consistency_error("patch id " + m.patches[i].id + " appears in areas " +
                              m.patches[i - 1].area_id + " and " + m.patches[i].area_id);
  return m;
}

namespace {

// Aerial and label rasters are (bands, H, H); H is 512 for challenge data but
// stays free so desk-scale synthetic datasets use the same files.
void check_raster(const Tensor<uint8_t>& t, long bands, const std::string& what) {
  if (t.shape.size() != 3 || t.shape[0] != bands || t.shape[1] != t.shape[2] || t.shape[1] < 1)
    throw format_error(what + " must be (" + std::to_string(bands) +
                       ", H, H) with square H >= 1, got " + t.shape_str());
}

}  // namespace

AerialPatch read_aerial(const fs::path& path) {
  AerialPatch p;
  p.id = path.stem().string();
  p.pixels = io::read_tiff_u8(path);
  check_raster(p.pixels, kAerialBands, "aerial patch " + p.id);
  return p;
}

void write_aerial(const fs::path& path, const AerialPatch& patch) {
  check_raster(patch.pixels, kAerialBands, "aerial patch " + patch.id);
  io::write_tiff_u8(path, patch.pixels);
}

LabelMask read_label(const fs::path& path) {
  LabelMask m;
  m.id = path.stem().string();
  Tensor<uint8_t> raw = io::read_tiff_u8(path);
  check_raster(raw, 1, "label mask " + m.id);
  long hw = raw.shape[1];
  m.pixels.resize({hw, hw});
  m.pixels.data = std::move(raw.data);
  m.canonical = false;
  return m;
}

void write_label(const fs::path& path, const LabelMask& mask) {
  if (mask.pixels.shape.size() != 2 || mask.pixels.shape[0] != mask.pixels.shape[1])
    throw format_error("label mask " + mask.id + " must be square (H, H), got " +
                       mask.pixels.shape_str());
  long hw = mask.pixels.shape[0];
  Tensor<uint8_t> banded({1, hw, hw});
  banded.data = mask.pixels.data;
  io::write_tiff_u8(path, banded);
}

AcquisitionRecord parse_product_name(const std::string& line) {
  std::vector<std::string> tok;
  std::string cur;
  for (char c : line) {
    if (c == '_') {
      tok.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  tok.push_back(cur);
  if (tok.size() < 6)
    throw format_error("product name '" + line + "' has " + std::to_string(tok.size()) +
                       " fields, expected at least 6");

  AcquisitionRecord r;
  r.product_name = line;
  if (tok[0] == "S2A") r.platform = Platform::S2A;
  else if (tok[0] == "S2B") r.platform = Platform::S2B;
  else throw format_error("product name '" + line + "': unknown platform '" + tok[0] + "'");

  // First datetime token: yyyymmddThhmmss.
  const std::string& dt = tok[2];
  auto tpos = dt.find('T');
  if (dt.size() < 15 || tpos != 8)
    throw format_error("product name '" + line + "': bad datetime field '" + dt + "'");
  r.date = CalendarDate::parse_compact(dt.substr(0, 8));
  r.time = dt.substr(9, 6);

  const std::string& orb = tok[4];
  if (orb.size() < 2 || orb[0] != 'R')
    throw format_error("product name '" + line + "': bad orbit field '" + orb + "'");
  r.orbit = std::stoi(orb.substr(1));
  r.tile = tok[5];
  return r;
}

SentinelSeries read_sentinel(const fs::path& area_dir) {
  fs::path dir = fs::exists(area_dir / "sen") ? area_dir / "sen" : area_dir;
  std::string area = area_dir.filename().string();
  fs::path data_p = dir / ("SEN2_" + area + "_data.npy");
  fs::path masks_p = dir / ("SEN2_" + area + "_masks.npy");
  fs::path prods_p = dir / ("SEN2_" + area + "_products.txt");
  for (const auto& p : {data_p, masks_p, prods_p})
    if (!fs::exists(p)) throw data_error("sentinel file " + p.string() + " is missing");

  SentinelSeries s;
  s.area_id = area;
  s.data = io::read_npy_u16(data_p);
  s.masks = io::read_npy_u8_widened(masks_p);

  std::ifstream f(prods_p);
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    s.products.push_back(parse_product_name(line));
  }
  s.validate();
  return s;
}

void write_sentinel(const fs::path& area_dir, const SentinelSeries& series) {
  series.validate();
  fs::path dir = area_dir / "sen";
  fs::create_directories(dir);
  const std::string& area = series.area_id;
  io::write_npy_u16(dir / ("SEN2_" + area + "_data.npy"), series.data);
  io::write_npy_u8(dir / ("SEN2_" + area + "_masks.npy"), series.masks);
  std::ofstream f(dir / ("SEN2_" + area + "_products.txt"));
  for (const auto& p : series.products) f << p.product_name << "\n";
  if (!f) throw error("short write to " + (dir / ("SEN2_" + area + "_products.txt")).string());
}

SuperPatchIndex load_centroids(const fs::path& path, std::vector<std::string>* warnings) {
  std::ifstream f(path);
  if (!f) throw error("cannot open " + path.string());

  // nlohmann silently keeps the last duplicate, so spot duplicates with a
  // parser callback before building the index.
  std::vector<std::string> keys;
  json j;
  try {
    json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
      if (depth == 1 && event == json::parse_event_t::key)
        keys.push_back(parsed.get<std::string>());
      return true;
    };
    j = json::parse(f, cb);
  } catch (const json::exception& e) {
    throw format_error("centroid file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw format_error("centroid file " + path.string() + " is not a JSON map");

  std::map<std::string, int> seen;
  for (const auto& k : keys)
    if (++seen[k] == 2 && warnings)
      warnings->push_back("centroid file: duplicate id " + k + ", keeping the last entry");

  SuperPatchIndex idx;
  for (const auto& [key, val] : j.items()) {
    if (!val.is_array() || val.size() != 2 || !val[0].is_number_integer() ||
        !val[1].is_number_integer())
      throw format_error("centroid file " + path.string() + ": entry '" + key +
                         "' is not a 2-element integer list");
    idx.entries[key] = {val[0].get<long>(), val[1].get<long>()};
  }
  return idx;
}

void write_centroids(const fs::path& path, const SuperPatchIndex& index) {
  json j = json::object();
  for (const auto& [id, c] : index.entries) j[id] = {c.row, c.col};
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw error("short write to " + path.string());
}

std::map<std::string, PatchMetadata> load_metadata(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw format_error("metadata file " + path.string() + ": " + e.what());
  }
  std::map<std::string, PatchMetadata> out;
  for (const auto& [key, v] : j.items()) {
    try {
      PatchMetadata m;
      m.acquisition_date = v.at("date").get<std::string>();
      m.acquisition_time = v.at("time").get<std::string>();
      m.x = v.at("patch_centroid_x").get<double>();
      m.y = v.at("patch_centroid_y").get<double>();
      m.z = v.at("patch_centroid_z").get<double>();
      m.camera = v.at("camera").get<std::string>();
      out[key] = std::move(m);
    } catch (const json::exception& e) {
      throw format_error("metadata file " + path.string() + ", entry '" + key + "': " + e.what());
    }
  }
  return out;
}

void write_metadata(const fs::path& path, const std::map<std::string, PatchMetadata>& meta) {
  json j = json::object();
  for (const auto& [id, m] : meta) {
    j[id] = {{"date", m.acquisition_date},     {"time", m.acquisition_time},
             {"patch_centroid_x", m.x},        {"patch_centroid_y", m.y},
             {"patch_centroid_z", m.z},        {"camera", m.camera}};
  }
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw error("short write to " + path.string());
}

long crop_start(long center, long size, long extent) {
  long start = center - size / 2;
  if (start < 0) start = 0;
  if (start + size > extent) start = extent - size;
  return start;
}

SuperPatch crop_superpatch(const SentinelSeries& series, long row, long col, long size) {
  long h = series.height(), w = series.width();
  if (size > h || size > w)
    throw data_error("cannot crop " + std::to_string(size) + "x" + std::to_string(size) +
                     " super-patch from a " + std::to_string(h) + "x" + std::to_string(w) +
                     " area");
  long t = series.t();
  SuperPatch sp;
  sp.source_area = series.area_id;
  sp.origin_row = crop_start(row, size, h);
  sp.origin_col = crop_start(col, size, w);
  sp.data.resize({t, kSenBands, size, size});
  sp.masks.resize({t, 2, size, size});
  for (long ti = 0; ti < t; ++ti) {
    for (long c = 0; c < kSenBands; ++c)
      for (long r = 0; r < size; ++r)
        for (long x = 0; x < size; ++x)
          sp.data.at4(ti, c, r, x) = series.data.at4(ti, c, sp.origin_row + r, sp.origin_col + x);
    for (long c = 0; c < 2; ++c)
      for (long r = 0; r < size; ++r)
        for (long x = 0; x < size; ++x)
          sp.masks.at4(ti, c, r, x) = series.masks.at4(ti, c, sp.origin_row + r, sp.origin_col + x);
  }
  return sp;
}

}  // namespace flair::ds

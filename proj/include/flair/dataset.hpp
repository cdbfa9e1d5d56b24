#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flair/data_model.hpp"

namespace flair::ds {

namespace fs = std::filesystem;

// One aerial patch as discovered on disk. label_path stays empty for splits
// shipped without ground truth.
struct PatchEntry {
  std::string id;  // IMG_<number>
  fs::path aerial_path;
  fs::path label_path;
  std::string area_id;
  std::string domain;
};

struct DatasetManifest {
  fs::path root;
  std::string split;
  std::vector<std::string> domains;                            // sorted
  std::map<std::string, std::vector<std::string>> areas;       // domain -> sorted area ids
  std::vector<PatchEntry> patches;                             // sorted by id

  const PatchEntry& find(const std::string& id) const;
};

// "D077_2021-Z9_AF" -> "D077_2021".
std::string domain_of_area(const std::string& area_id);

// Walks root/{aerial,sen,labels}/<split> and cross-checks the three trees.
// Ordering is lexicographic everywhere, so a manifest is deterministic.
DatasetManifest scan_dataset(const fs::path& root, const std::string& split);

AerialPatch read_aerial(const fs::path& path);
void write_aerial(const fs::path& path, const AerialPatch& patch);

// Raw on-disk mask, canonical flag unset.
LabelMask read_label(const fs::path& path);
void write_label(const fs::path& path, const LabelMask& mask);

// Positional parse of an underscore-separated product name; the first
// datetime token supplies date and time.
AcquisitionRecord parse_product_name(const std::string& line);

// area_dir is the per-area directory, with the triple either directly inside
// or under a sen/ child. The area id comes from the directory name.
SentinelSeries read_sentinel(const fs::path& area_dir);
void write_sentinel(const fs::path& area_dir, const SentinelSeries& series);

// Duplicate ids keep the last occurrence; each duplicate appends a warning.
SuperPatchIndex load_centroids(const fs::path& path,
                               std::vector<std::string>* warnings = nullptr);
void write_centroids(const fs::path& path, const SuperPatchIndex& index);

std::map<std::string, PatchMetadata> load_metadata(const fs::path& path);
void write_metadata(const fs::path& path,
                    const std::map<std::string, PatchMetadata>& meta);

struct SuperPatch {
  Tensor<uint16_t> data;  // T x 10 x S x S
  Tensor<uint8_t> masks;  // T x 2 x S x S
  long origin_row = 0;    // realized window start after any inward shift
  long origin_col = 0;
  std::string source_area;
};

// Window start for a size-wide crop nominally spanning
// [center - size/2, center + (size+1)/2), shifted inward to fit [0, extent).
long crop_start(long center, long size, long extent);

// size x size crop around the centroid; throws data_error when the source is
// smaller than the crop on either axis.
SuperPatch crop_superpatch(const SentinelSeries& series, long row, long col, long size);

}  // namespace flair::ds

#pragma once

#include <filesystem>
#include <string>

#include "flair/dataset.hpp"

namespace flair::synth {

namespace fs = std::filesystem;

// Shape of a synthetic dataset. Aerial patches are patch_size^2 pixels;
// footprint_px is the side of one patch's footprint on the satellite grid
// (0 derives it from patch_size at the 0.2 m / 10 m resolution ratio).
struct GenerateSpec {
  long domains = 1;
  long areas_per_domain = 1;
  long patches_per_area = 4;
  long t = 24;  // acquisition dates per area
  uint64_t seed = 7;
  long patch_size = 64;
  long footprint_px = 0;
  long val_domains = -1;  // -1: one domain when there are at least two
  bool clouds = true;
  // Every patch becomes a single-class tile, alternating evergreen (6) and
  // deciduous (7), with byte-identical aerial pixels and a shared satellite
  // base reflectance; only the seasonal profile separates the two. A
  // texture-only model cannot beat chance between them.
  bool temporal_pair = false;

  long footprint() const;
  long resolved_val_domains() const;
  void validate() const;
};

struct GenerateSummary {
  long patches = 0;
  long train_domains = 0;
  long val_domains = 0;
};

// Writes a complete dataset tree under out: aerial/label rasters, satellite
// triples, metadata_aerial.json and centroids_sp_to_patch.json. Labels are
// drawn first and every texture is rendered from them, so the classes are
// learnable; classes 6 and 7 share their aerial rendering and differ only in
// seasonal satellite amplitude. Byte-reproducible for a fixed spec. Refuses
// a non-empty target unless force is set (then the target is replaced).
GenerateSummary generate_dataset(const fs::path& out, const GenerateSpec& spec, bool force);

}  // namespace flair::synth

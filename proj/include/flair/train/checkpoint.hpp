#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "flair/net/utt.hpp"
#include "flair/prep.hpp"
#include "flair/train/strategies.hpp"

namespace flair::train {

namespace fs = std::filesystem;
using nlohmann::json;

json net_config_to_json(const net::UTTConfig& cfg);
net::UTTConfig net_config_from_json(const json& j);

// Header of a saved network: everything needed to rebuild the net and rerun
// inference, the seed included so a run is reconstructible from its artifact.
struct CheckpointInfo {
  uint64_t seed = 0;
  net::UTTConfig config;
  Strategies strategies;  // the input-shaping toggles the net was trained with
  prep::FilterConfig filter;
  std::vector<std::string> class_names;
};

// Binary layout: 8-byte magic, little-endian u64 header length, JSON header
// (format, version, seed, config, strategies, filter, classes, params with
// names and shapes), then float32 parameter data in registration order.
void save_checkpoint(const fs::path& path, net::UTTNet<float>& net, uint64_t seed,
                     const Strategies& strategies, const prep::FilterConfig& filter);

// Rebuilds the net from the stored config and fills every parameter.
// Throws format_error on bad magic/version, truncation, or a parameter list
// that does not match the reconstructed net.
CheckpointInfo load_checkpoint(const fs::path& path, net::UTTNet<float>& net);

CheckpointInfo read_checkpoint_info(const fs::path& path);

}  // namespace flair::train

#pragma once

#include <filesystem>
#include <string>

#include "flair/net/utt.hpp"
#include "flair/prep.hpp"
#include "flair/train/strategies.hpp"
#include "flair/train/trainer.hpp"

namespace flair {

namespace fs = std::filesystem;

// Everything a training or prediction run needs, as read from one JSON file.
struct RunConfig {
  std::string dataset;  // paths.dataset
  std::string out;      // paths.out
  train::TrainParams train;
  train::Strategies strategies;
  prep::FilterConfig filter;
  net::UTTConfig network;
};

// Parses and validates a run configuration. Unknown keys are rejected at
// every nesting level, types are checked, and value constraints run last;
// every problem found is collected into one validation_error, so a config
// never fails one key at a time. source names the input in messages.
RunConfig parse_run_config(const std::string& text, const std::string& source);

RunConfig load_run_config(const fs::path& path);

}  // namespace flair

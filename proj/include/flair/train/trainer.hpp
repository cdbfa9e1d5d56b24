#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flair/dataset.hpp"
#include "flair/net/utt.hpp"
#include "flair/prep.hpp"
#include "flair/train/checkpoint.hpp"
#include "flair/train/strategies.hpp"

namespace flair::train {

namespace fs = std::filesystem;

struct TrainParams {
  double lr = 0.001;
  double momentum = 0.9;
  long plateau_patience = 10;
  double plateau_factor = 0.5;
  long early_stop_patience = 30;
  long max_epochs = 100;
  long batch_size = 10;
  uint64_t seed = 2022;
  double modality_dropout_threshold = 0.5;
  double augmentation_prob = 0.5;
  bool eval_train_miou = false;     // adds a train-set mIoU pass per epoch
  double stop_at_train_miou = 0.0;  // > 0: stop once train mIoU reaches it

  void collect_errors(std::vector<std::string>& errs) const;
};

// One modality draw per batch: a uniform value above the threshold drops the
// temporal branch for the whole batch.
inline bool modality_both(double threshold, Rng& rng) { return !(rng.uniform() > threshold); }

// One training sample, fully materialized: raw aerial counts, canonical
// labels, and the preprocessed satellite stack in reflectance counts
// (composites keep the same scale). sat stays empty for texture-only runs.
struct Sample {
  std::string id;
  Tensor<float> aerial;  // (1, 5, H, H), 0..255
  Tensor<uint8_t> labels;
  Tensor<float> sat;       // (T', 10, S, S), 0..10000
  std::vector<int> dates;  // day of year per frame
  long centroid_r = 0, centroid_c = 0;  // local to the super-patch crop
  PatchMetadata meta;
};

// Loads samples for training or prediction, applying the input-shaping
// strategies (nodata filtering always; cloud/snow filtering and monthly
// compositing per toggles). Satellite series are cached per area. A series
// that a filter would empty falls back to its least cloudy date, with a
// warning.
class SampleLoader {
 public:
  SampleLoader(fs::path root, Strategies strategies, prep::FilterConfig filter,
               long superpatch_size, bool need_sat);

  Sample load(const ds::PatchEntry& entry);
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  const SentinelSeries& series_of(const std::string& area_id, const std::string& domain,
                                  const std::string& split);

  fs::path root_;
  Strategies strategies_;
  prep::FilterConfig filter_;
  long superpatch_;
  bool need_sat_;
  SuperPatchIndex centroids_;
  std::map<std::string, PatchMetadata> metadata_;
  std::map<std::string, SentinelSeries> series_cache_;
  std::vector<std::string> warnings_;
};

struct EpochRecord {
  long epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_miou = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  long best_epoch = 0;
  double best_val_loss = 0;
  double final_val_miou = 0;
  double final_train_miou = -1;  // -1 when never evaluated
  bool early_stopped = false;
  bool reached_target = false;
  fs::path checkpoint_path;
  fs::path history_path;
  std::vector<std::string> warnings;
};

// The optimization loop: SGD with momentum, plateau halving on validation
// loss, early stopping, best-validation checkpointing, and a line-delimited
// JSON history. All randomness flows from TrainParams::seed. Training data
// comes from the train split; validation from the val split, falling back to
// the train split (with a warning) when the dataset has none.
class Trainer {
 public:
  Trainer(fs::path dataset_root, fs::path out_dir, net::UTTConfig net_cfg, TrainParams params,
          Strategies strategies, prep::FilterConfig filter);

  TrainResult run();

  net::UTTNet<float>& net() { return net_; }

 private:
  fs::path root_, out_;
  net::UTTConfig net_cfg_;
  TrainParams params_;
  Strategies strategies_;
  prep::FilterConfig filter_;
  net::UTTNet<float> net_;
};

}  // namespace flair::train

#include "flair/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "flair/eval/metrics.hpp"
#include "flair/train/augment.hpp"
#include "flair/train/loss.hpp"

namespace flair::train {

namespace {

// Representative day of year for a monthly composite: the 15th.
int month_doy(int year, int month) {
  CalendarDate d;
  d.year = year;
  d.month = month;
  d.day = 15;
  return d.day_of_year();
}

SentinelSeries single_date(const SentinelSeries& series, long t) {
  long s = series.height() * series.width();
  SentinelSeries out;
  out.area_id = series.area_id;
  out.data.resize({1, kSenBands, series.height(), series.width()});
  out.masks.resize({1, 2, series.height(), series.width()});
  std::copy_n(series.data.ptr() + t * kSenBands * s, kSenBands * s, out.data.ptr());
  std::copy_n(series.masks.ptr() + t * 2 * s, 2 * s, out.masks.ptr());
  out.products.push_back(series.products[size_t(t)]);
  return out;
}

}  // namespace

void TrainParams::collect_errors(std::vector<std::string>& errs) const {
  if (!(lr > 0)) errs.push_back("train.lr must be positive");
  if (momentum < 0 || momentum >= 1) errs.push_back("train.momentum must lie in [0, 1)");
  if (plateau_patience < 1) errs.push_back("train.plateau_patience must be at least 1");
  if (!(plateau_factor > 0) || plateau_factor >= 1)
    errs.push_back("train.plateau_factor must lie in (0, 1)");
  if (early_stop_patience < 1) errs.push_back("train.early_stop_patience must be at least 1");
  if (max_epochs < 1) errs.push_back("train.max_epochs must be at least 1");
  if (batch_size < 1) errs.push_back("train.batch_size must be at least 1");
  if (modality_dropout_threshold < 0 || modality_dropout_threshold > 1)
    errs.push_back("train.modality_dropout_threshold must lie in [0, 1]");
  if (augmentation_prob < 0 || augmentation_prob > 1)
    errs.push_back("train.augmentation_prob must lie in [0, 1]");
  if (stop_at_train_miou < 0 || stop_at_train_miou > 1)
    errs.push_back("train.stop_at_train_miou must lie in [0, 1]");
}

SampleLoader::SampleLoader(fs::path root, Strategies strategies, prep::FilterConfig filter,
                           long superpatch_size, bool need_sat)
    : root_(std::move(root)),
      strategies_(strategies),
      filter_(filter),
      superpatch_(superpatch_size),
      need_sat_(need_sat) {
  if (need_sat_) {
    std::vector<std::string> dup_warnings;
    centroids_ = ds::load_centroids(root_ / "centroids_sp_to_patch.json", &dup_warnings);
    for (auto& w : dup_warnings) warnings_.push_back(w);
  }
  fs::path meta_path = root_ / "metadata_aerial.json";
  if (fs::exists(meta_path)) metadata_ = ds::load_metadata(meta_path);
}

const SentinelSeries& SampleLoader::series_of(const std::string& area_id,
                                              const std::string& domain,
                                              const std::string& split) {
  auto it = series_cache_.find(area_id);
  if (it != series_cache_.end()) return it->second;
  SentinelSeries s = ds::read_sentinel(root_ / "sen" / split / domain / area_id);
  return series_cache_.emplace(area_id, std::move(s)).first->second;
}

Sample SampleLoader::load(const ds::PatchEntry& entry) {
  Sample sample;
  sample.id = entry.id;

  AerialPatch aerial = ds::read_aerial(entry.aerial_path);
  long hw = aerial.pixels.shape[1];
  sample.aerial.resize({1, kAerialBands, hw, hw});
  for (long i = 0; i < aerial.pixels.numel(); ++i)
    sample.aerial.data[size_t(i)] = float(aerial.pixels.data[size_t(i)]);

  if (!entry.label_path.empty()) {
    LabelMask mask = remap_labels(ds::read_label(entry.label_path));
    sample.labels = std::move(mask.pixels);
  }

  auto mit = metadata_.find(entry.id);
  if (mit != metadata_.end()) sample.meta = mit->second;

  if (!need_sat_) return sample;

  auto cit = centroids_.entries.find(entry.id);
  if (cit == centroids_.entries.end())
    throw data_error("patch " + entry.id + " has no super-patch centroid");
  // aerial_path is root/aerial/<split>/<domain>/<area>/img/IMG_x.tif.
  std::string split =
      entry.aerial_path.parent_path().parent_path().parent_path().parent_path().filename().string();
  const SentinelSeries& series = series_of(entry.area_id, entry.domain, split);
  ds::SuperPatch sp = ds::crop_superpatch(series, cit->second.row, cit->second.col, superpatch_);
  sample.centroid_r = cit->second.row - sp.origin_row;
  sample.centroid_c = cit->second.col - sp.origin_col;

  SentinelSeries local;
  local.area_id = entry.area_id;
  local.data = std::move(sp.data);
  local.masks = std::move(sp.masks);
  local.products = series.products;

  try {
    local = prep::filter_nodata(local);
  } catch (const data_error&) {
    warnings_.push_back("series for " + entry.id + ": every date has nodata, keeping the least cloudy one");
    local = single_date(local, prep::least_cloudy_date(local, filter_.prob_threshold));
  }
  if (strategies_.filter) {
    try {
      local = prep::filter_cloud_snow(local, filter_);
    } catch (const data_error&) {
      warnings_.push_back("series for " + entry.id + ": every date is covered, keeping the least cloudy one");
      local = single_date(local, prep::least_cloudy_date(local, filter_.prob_threshold));
    }
  }

  if (strategies_.monthly_average) {
    // Without the filter strategy, composites average every date: a
    // pass-everything filter config keeps monthly_average's internal
    // screening inert.
    prep::FilterConfig comp_filter = strategies_.filter ? filter_ : prep::FilterConfig{100, 1.0};
    prep::CompositeSeries comp = prep::monthly_average(local, comp_filter);
    sample.sat.resize(comp.data.shape);
    for (long i = 0; i < comp.data.numel(); ++i)
      sample.sat.data[size_t(i)] = float(comp.data.data[size_t(i)]);
    for (size_t m = 0; m < comp.months.size(); ++m)
      sample.dates.push_back(month_doy(comp.months[m].first, comp.months[m].second));
  } else {
    sample.sat.resize(local.data.shape);
    for (long i = 0; i < local.data.numel(); ++i)
      sample.sat.data[size_t(i)] = float(local.data.data[size_t(i)]);
    for (const auto& rec : local.products) sample.dates.push_back(rec.date.day_of_year());
  }
  return sample;
}

Trainer::Trainer(fs::path dataset_root, fs::path out_dir, net::UTTConfig net_cfg,
                 TrainParams params, Strategies strategies, prep::FilterConfig filter)
    : root_(std::move(dataset_root)),
      out_(std::move(out_dir)),
      net_cfg_(net_cfg),
      params_(params),
      strategies_(strategies),
      filter_(filter) {
  std::vector<std::string> errs;
  params_.collect_errors(errs);
  if (!errs.empty()) {
    std::string msg = "invalid training parameters:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw validation_error(msg);
  }
}

TrainResult Trainer::run() {
  TrainResult result;
  fs::create_directories(out_);

  ds::DatasetManifest train_manifest = ds::scan_dataset(root_, "train");
  if (train_manifest.patches.empty()) throw data_error("train split has no patches");

  std::optional<ds::DatasetManifest> val_manifest;
  try {
    val_manifest = ds::scan_dataset(root_, "val");
  } catch (const flair::error&) {
    // fall through to the train-split fallback below
  }
  bool val_is_train = !val_manifest || val_manifest->patches.empty();
  if (val_is_train)
    result.warnings.push_back(
        "dataset has no val split; validating on the train split");

  SampleLoader loader(root_, strategies_, filter_, net_cfg_.fusion.sat_superpatch_size,
                      net_cfg_.use_temporal);
  auto load_labeled = [&](const ds::PatchEntry& e) {
    Sample s = loader.load(e);
    if (s.labels.empty()) throw data_error("patch " + e.id + " has no label mask");
    return s;
  };
  std::vector<Sample> train_samples;
  for (const auto& e : train_manifest.patches) train_samples.push_back(load_labeled(e));
  std::vector<Sample> val_samples;
  if (!val_is_train)
    for (const auto& e : val_manifest->patches) val_samples.push_back(load_labeled(e));
  for (const auto& w : loader.warnings()) result.warnings.push_back(w);

  std::vector<Sample>& val_ref = val_is_train ? train_samples : val_samples;

  Rng init_rng(params_.seed);
  net_cfg_.use_metadata = strategies_.metadata;
  net_.init(net_cfg_, init_rng);
  nn::ParamList<float> pl;
  net_.params(pl);

  std::vector<Tensor<float>> velocity(pl.size());
  for (size_t i = 0; i < pl.size(); ++i) {
    velocity[i].resize(pl[i].p->v.shape);
    velocity[i].zero();
  }

  auto nom = Nomenclature::flair();
  Rng rng = init_rng.fork("train-loop");
  double lr = params_.lr;
  double best_val = std::numeric_limits<double>::infinity();
  long since_best = 0, since_plateau = 0;
  result.checkpoint_path = out_ / "best_checkpoint.bin";
  result.history_path = out_ / "history.jsonl";
  std::ofstream history(result.history_path, std::ios::trunc);
  if (!history) throw error("cannot open " + result.history_path.string());

  std::vector<size_t> order(train_samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  // Forward one sample and return its loss; grads when scale > 0.
  auto step_sample = [&](Sample& s, bool both, double scale, bool train_mode) {
    const Tensor<float>* sat = both && !s.sat.empty() ? &s.sat : nullptr;
    const PatchMetadata* meta = strategies_.metadata ? &s.meta : nullptr;

    Tensor<float> aerial = s.aerial;
    Tensor<uint8_t> labels = s.labels;
    if (train_mode && strategies_.augment) {
      Augment a = draw_augment(params_.augmentation_prob, rng);
      aerial = apply_augment(aerial, a);
      labels = apply_augment(labels, a);
    }

    auto out = net_.forward(aerial, sat, s.dates, s.centroid_r, s.centroid_c, meta, train_mode,
                            rng);
    if (scale <= 0) {
      TTLoss l = tt_loss(out.aerial_logits, out.sat_logits_aerial, labels, nom, nullptr, nullptr);
      return l.total;
    }
    Tensor<float> ga, gs;
    TTLoss l = tt_loss(out.aerial_logits, out.sat_logits_aerial, labels, nom, &ga, &gs);
    for (auto& v : ga.data) v *= float(scale);
    for (auto& v : gs.data) v *= float(scale);
    net_.backward(ga, gs);
    return l.total;
  };

  auto eval_miou = [&](std::vector<Sample>& samples) {
    eval::ConfusionMatrix total;
    for (auto& s : samples) {
      auto out = net_.forward(s.aerial, net_cfg_.use_temporal && !s.sat.empty() ? &s.sat : nullptr,
                              s.dates, s.centroid_r, s.centroid_c,
                              strategies_.metadata ? &s.meta : nullptr, false, rng);
      LabelMask m;
      m.id = s.id;
      m.pixels = s.labels;
      m.canonical = true;
      total += eval::confusion(eval::argmax_classes(out.aerial_logits), m);
    }
    try {
      return eval::mean_iou(eval::per_class_iou(total));
    } catch (const data_error&) {
      return 0.0;
    }
  };

  for (long epoch = 1; epoch <= params_.max_epochs; ++epoch) {
    // Fisher-Yates over the sample order.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.uniform_int(0, long(i) - 1))]);

    double train_loss = 0;
    long batches = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += size_t(params_.batch_size), ++batches) {
      size_t b1 = std::min(order.size(), b0 + size_t(params_.batch_size));
      bool both = true;
      if (net_cfg_.use_temporal && strategies_.modality_dropout)
        both = modality_both(params_.modality_dropout_threshold, rng);

      nn::zero_grads(pl);
      double batch_loss = 0;
      for (size_t i = b0; i < b1; ++i)
        batch_loss += step_sample(train_samples[order[i]], both, 1.0 / double(b1 - b0), true);
      batch_loss /= double(b1 - b0);
      if (!std::isfinite(batch_loss)) {
        std::string ids;
        for (size_t i = b0; i < b1; ++i)
          ids += (ids.empty() ? "" : ", ") + train_samples[order[i]].id;
        throw error("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches) + " (" + ids + ")");
      }
      train_loss += batch_loss;

      for (size_t i = 0; i < pl.size(); ++i) {
        float* v = velocity[i].data.data();
        float* g = pl[i].p->g.data.data();
        float* w = pl[i].p->v.data.data();
        long n = pl[i].p->numel();
        for (long k = 0; k < n; ++k) {
          v[k] = float(params_.momentum) * v[k] + g[k];
          w[k] -= float(lr) * v[k];
        }
      }
    }
    train_loss /= double(std::max<long>(1, batches));

    double val_loss = 0;
    for (auto& s : val_ref) val_loss += step_sample(s, true, 0.0, false);
    val_loss /= double(val_ref.size());
    double val_miou = eval_miou(val_ref);

    EpochRecord rec{epoch, train_loss, val_loss, val_miou, lr};
    result.history.push_back(rec);
    nlohmann::json line = {{"epoch", epoch},
                           {"train_loss", train_loss},
                           {"val_loss", val_loss},
                           {"val_miou", val_miou},
                           {"lr", lr}};
    history << line.dump() << "\n";
    history.flush();

    if (val_loss < best_val) {
      best_val = val_loss;
      since_best = 0;
      since_plateau = 0;
      result.best_epoch = epoch;
      save_checkpoint(result.checkpoint_path, net_, params_.seed, strategies_, filter_);
    } else {
      ++since_best;
      ++since_plateau;
    }

    double train_miou = -1;
    if (params_.eval_train_miou || params_.stop_at_train_miou > 0) {
      train_miou = eval_miou(train_samples);
      result.final_train_miou = train_miou;
    }
    if (params_.stop_at_train_miou > 0 && train_miou >= params_.stop_at_train_miou) {
      result.reached_target = true;
      break;
    }
    if (since_best >= params_.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
    if (since_plateau >= params_.plateau_patience) {
      lr *= params_.plateau_factor;
      since_plateau = 0;
    }
  }

  result.best_val_loss = best_val;
  result.final_val_miou = result.history.empty() ? 0 : result.history.back().val_miou;
  if (result.best_epoch == 0)
    save_checkpoint(result.checkpoint_path, net_, params_.seed, strategies_, filter_);
  return result;
}

}  // namespace flair::train

// Command-line front end: dataset generation, preprocessing inspection,
// training, prediction, and evaluation over one dataset layout.
//
// Exit codes: 0 success, 1 runtime failure (I/O, corrupt data, diverged
// training), 2 rejected input (bad flags, bad config, mismatched artifacts).

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flair/config.hpp"
#include "flair/dataset.hpp"
#include "flair/errors.hpp"
#include "flair/eval/metrics.hpp"
#include "flair/eval/report.hpp"
#include "flair/io/tiff.hpp"
#include "flair/prep.hpp"
#include "flair/synth.hpp"
#include "flair/train/checkpoint.hpp"
#include "flair/train/trainer.hpp"

namespace {

using namespace flair;

std::string fmt4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

struct GenerateArgs {
  synth::GenerateSpec spec;
  std::string out;
  bool force = false;
  bool no_clouds = false;
};

int run_generate(const GenerateArgs& a) {
  synth::GenerateSpec spec = a.spec;
  spec.clouds = !a.no_clouds;
  synth::GenerateSummary s = synth::generate_dataset(a.out, spec, a.force);
  std::cout << "generated " << s.patches << " patches (" << s.train_domains << " train + "
            << s.val_domains << " val domains) under " << a.out << "\n";
  return 0;
}

struct PreprocessArgs {
  std::string dataset;
  std::string split = "train";
  std::string out;
  prep::FilterConfig filter;
  bool monthly = false;
};

int run_preprocess(const PreprocessArgs& a) {
  a.filter.validate();
  ds::DatasetManifest m = ds::scan_dataset(a.dataset, a.split);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [domain, areas] : m.areas) {
    for (const auto& area : areas) {
      SentinelSeries series =
          ds::read_sentinel(fs::path(a.dataset) / "sen" / a.split / domain / area);
      long total = series.t();
      long after_nodata = 0, kept = 0, months = 0;
      std::string note;
      try {
        SentinelSeries nd = prep::filter_nodata(series);
        after_nodata = nd.t();
        try {
          SentinelSeries cl = prep::filter_cloud_snow(nd, a.filter);
          kept = cl.t();
          if (a.monthly) months = prep::monthly_average(cl, a.filter).m();
        } catch (const data_error&) {
          note = "every date covered";
        }
      } catch (const data_error&) {
        note = "every date has nodata";
      }
      std::cout << area << ": " << total << " dates, " << (total - after_nodata) << " nodata, "
                << (after_nodata - kept) << " covered, " << kept << " kept";
      if (a.monthly) std::cout << ", " << months << " months";
      if (!note.empty()) std::cout << " (" << note << ")";
      std::cout << "\n";
      nlohmann::json row = {{"area", area},         {"dates", total},
                            {"nodata_dropped", total - after_nodata},
                            {"cloud_dropped", after_nodata - kept},
                            {"kept", kept}};
      if (a.monthly) row["months"] = months;
      if (!note.empty()) row["note"] = note;
      summary.push_back(row);
    }
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream f(fs::path(a.out) / "preprocess_summary.json", std::ios::trunc);
    if (!f) throw error("cannot open " + (fs::path(a.out) / "preprocess_summary.json").string());
    f << summary.dump(2) << "\n";
  }
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string dataset;  // overrides paths.dataset
  std::string out;      // overrides paths.out
  bool unet_only = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config_path);
  if (!a.dataset.empty()) cfg.dataset = a.dataset;
  if (!a.out.empty()) cfg.out = a.out;
  std::vector<std::string> errs;
  if (cfg.dataset.empty()) errs.push_back("paths.dataset missing (or pass --dataset)");
  if (cfg.out.empty()) errs.push_back("paths.out missing (or pass --out)");
  if (!errs.empty()) {
    std::string msg = "invalid run setup:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw validation_error(msg);
  }
  if (a.unet_only) cfg.network.use_temporal = false;

  train::Trainer trainer(cfg.dataset, cfg.out, cfg.network, cfg.train, cfg.strategies, cfg.filter);
  train::TrainResult r = trainer.run();
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  if (!a.quiet)
    for (const auto& e : r.history)
      std::cout << "epoch " << e.epoch << ": train_loss " << e.train_loss << " val_loss "
                << e.val_loss << " val_miou " << fmt4(e.val_miou) << " lr " << e.lr << "\n";
  std::cout << "best epoch " << r.best_epoch << ", checkpoint " << r.checkpoint_path.string()
            << "\n";
  std::cout << "final val mIoU " << fmt4(r.final_val_miou) << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "val";
  std::string out;
};

int run_predict(const PredictArgs& a) {
  net::UTTNet<float> net;
  train::CheckpointInfo info = train::load_checkpoint(a.checkpoint, net);
  if (info.class_names.size() != size_t(kNumClasses) ||
      info.config.texture.n_classes != kNumClasses)
    throw validation_error("checkpoint " + a.checkpoint + " predicts " +
                           std::to_string(info.config.texture.n_classes) + " classes (" +
                           std::to_string(info.class_names.size()) +
                           " names), this tool scores " + std::to_string(kNumClasses));

  ds::DatasetManifest m = ds::scan_dataset(a.dataset, a.split);
  train::SampleLoader loader(a.dataset, info.strategies, info.filter,
                             info.config.fusion.sat_superpatch_size, info.config.use_temporal);
  fs::create_directories(a.out);
  Rng rng(info.seed);  // inference never draws; forward just needs a stream
  for (const auto& entry : m.patches) {
    train::Sample s = loader.load(entry);
    auto out = net.forward(s.aerial, s.sat.empty() ? nullptr : &s.sat, s.dates, s.centroid_r,
                           s.centroid_c, info.config.use_metadata ? &s.meta : nullptr, false, rng);
    Tensor<uint8_t> classes = eval::argmax_classes(out.aerial_logits);
    long hw = classes.shape[0];
    Tensor<uint8_t> banded({1, hw, hw});
    banded.data = std::move(classes.data);
    io::write_tiff_u8(fs::path(a.out) / ("PRED_" + entry.id + ".tif"), banded);
  }
  for (const auto& w : loader.warnings()) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << m.patches.size() << " predictions to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string pred;
  std::string dataset;
  std::string split = "val";
  std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
  ds::DatasetManifest m = ds::scan_dataset(a.dataset, a.split);
  std::vector<std::string> missing_labels, missing_preds;
  for (const auto& entry : m.patches) {
    if (entry.label_path.empty()) missing_labels.push_back(entry.id);
    if (!fs::exists(fs::path(a.pred) / ("PRED_" + entry.id + ".tif")))
      missing_preds.push_back(entry.id);
  }
  if (!missing_labels.empty()) {
    std::string msg = "split " + a.split + " has no reference labels for:";
    for (const auto& id : missing_labels) msg += " " + id;
    throw validation_error(msg);
  }
  if (!missing_preds.empty()) {
    std::string msg = a.pred + " is missing predictions for:";
    for (const auto& id : missing_preds) msg += " " + id;
    throw validation_error(msg);
  }

  eval::ConfusionMatrix total;
  for (const auto& entry : m.patches) {
    Tensor<uint8_t> pred = io::read_tiff_u8(fs::path(a.pred) / ("PRED_" + entry.id + ".tif"));
    if (pred.shape.size() == 3) {
      if (pred.shape[0] != 1)
        throw format_error("PRED_" + entry.id + ".tif has " + std::to_string(pred.shape[0]) +
                           " bands, expected a single class band");
      pred.shape = {pred.shape[1], pred.shape[2]};
    }
    LabelMask ref = remap_labels(ds::read_label(entry.label_path));
    total += eval::confusion(pred, ref);
  }
  eval::EvalReport report = eval::build_report(total);
  if (!a.out.empty()) eval::write_report(a.out, report, Nomenclature::flair());
  std::cout << "mIoU " << fmt4(report.miou) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-branch land-cover segmentation: dataset tools, training, evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* g = app.add_subcommand("generate", "Write a synthetic dataset");
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--domains", gen.spec.domains, "Number of domains");
  g->add_option("--areas", gen.spec.areas_per_domain, "Areas per domain");
  g->add_option("--patches", gen.spec.patches_per_area, "Aerial patches per area");
  g->add_option("--t", gen.spec.t, "Satellite acquisition dates per area");
  g->add_option("--seed", gen.spec.seed, "Generation seed");
  g->add_option("--patch-size", gen.spec.patch_size, "Aerial patch side in pixels");
  g->add_option("--footprint", gen.spec.footprint_px,
                "Patch footprint on the satellite grid (0 derives it)");
  g->add_option("--val-domains", gen.spec.val_domains,
                "Domains reserved for validation (-1 picks automatically)");
  g->add_flag("--no-clouds", gen.no_clouds, "Skip the overcast date and heavy cloud masks");
  g->add_flag("--temporal-pair", gen.spec.temporal_pair,
              "Single-class patches split between two classes that differ only in seasonality");
  g->add_flag("--force", gen.force, "Replace a non-empty output directory");

  PreprocessArgs pre;
  CLI::App* p = app.add_subcommand("preprocess", "Report per-area filtering and compositing");
  p->add_option("--dataset", pre.dataset, "Dataset root")->required();
  p->add_option("--split", pre.split, "Split to scan (default train)");
  p->add_option("--out", pre.out, "Directory for preprocess_summary.json");
  p->add_option("--prob-threshold", pre.filter.prob_threshold,
                "Cloud/snow probability threshold (0..100)");
  p->add_option("--coverage-threshold", pre.filter.coverage_threshold,
                "Max covered fraction before a date is dropped");
  p->add_flag("--monthly", pre.monthly, "Also report surviving month counts");

  TrainArgs tra;
  CLI::App* t = app.add_subcommand("train", "Train from a JSON run config");
  t->add_option("--config", tra.config_path, "Run config path")
      ->envname("FLAIR_CONFIG")
      ->required();
  t->add_option("--dataset", tra.dataset, "Override paths.dataset");
  t->add_option("--out", tra.out, "Override paths.out");
  t->add_flag("--unet-only", tra.unet_only, "Drop the temporal branch and fusion");
  t->add_flag("--quiet", tra.quiet, "Suppress the per-epoch log");

  PredictArgs prd;
  CLI::App* d = app.add_subcommand("predict", "Write PRED_<id>.tif class rasters");
  d->add_option("--checkpoint", prd.checkpoint, "Trained checkpoint")->required();
  d->add_option("--dataset", prd.dataset, "Dataset root")->required();
  d->add_option("--split", prd.split, "Split to predict (default val)");
  d->add_option("--out", prd.out, "Prediction directory")->required();

  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate", "Score predictions against reference labels");
  e->add_option("--pred", ev.pred, "Directory of PRED_<id>.tif rasters")->required();
  e->add_option("--dataset", ev.dataset, "Dataset root")->required();
  e->add_option("--split", ev.split, "Split holding the references (default val)");
  e->add_option("--out", ev.out, "Directory for the metric artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << "\n";
    return 2;
  }

  try {
    if (g->parsed()) return run_generate(gen);
    if (p->parsed()) return run_preprocess(pre);
    if (t->parsed()) return run_train(tra);
    if (d->parsed()) return run_predict(prd);
    if (e->parsed()) return run_evaluate(ev);
    return 2;
  } catch (const validation_error& err) {
    std::cerr << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}

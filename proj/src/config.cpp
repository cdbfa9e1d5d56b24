#include "flair/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flair/errors.hpp"

namespace flair {

namespace {

using nlohmann::json;

// Walks one JSON object, tracking which keys were consumed so finish() can
// flag the rest as unknown. A null source object turns every lookup into a
// no-op, which keeps missing optional sections silent.
class Section {
 public:
  Section(const json* j, std::string prefix, std::vector<std::string>& errs)
      : j_(j), prefix_(std::move(prefix)), errs_(errs) {
    if (j_ && !j_->is_object()) {
      errs_.push_back(where() + " must be an object");
      j_ = nullptr;
    }
  }

  const json* child(const std::string& key) {
    const json* v = get(key);
    if (v && !v->is_object()) {
      errs_.push_back(path(key) + " must be an object");
      return nullptr;
    }
    return v;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = get(key)) {
      if (!v->is_number()) errs_.push_back(path(key) + " must be a number");
      else out = v->get<double>();
    }
  }

  void integer(const std::string& key, long& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_integer()) errs_.push_back(path(key) + " must be an integer");
      else out = v->get<long>();
    }
  }

  void integer(const std::string& key, int& out) {
    long tmp = out;
    integer(key, tmp);
    out = int(tmp);
  }

  void unsigned64(const std::string& key, uint64_t& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                      v->get<long long>() < 0))
        errs_.push_back(path(key) + " must be a non-negative integer");
      else out = v->get<uint64_t>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = get(key)) {
      if (!v->is_boolean()) errs_.push_back(path(key) + " must be a boolean");
      else out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) errs_.push_back(path(key) + " must be a string");
      else out = v->get<std::string>();
    }
  }

  void integer_list(const std::string& key, std::vector<long>& out) {
    if (const json* v = get(key)) {
      if (!v->is_array()) {
        errs_.push_back(path(key) + " must be an array of integers");
        return;
      }
      std::vector<long> vals;
      for (const auto& e : *v) {
        if (!e.is_number_integer()) {
          errs_.push_back(path(key) + " must be an array of integers");
          return;
        }
        vals.push_back(e.get<long>());
      }
      out = std::move(vals);
    }
  }

  void string_list(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = get(key)) {
      if (!v->is_array()) {
        errs_.push_back(path(key) + " must be an array of strings");
        return;
      }
      std::vector<std::string> vals;
      for (const auto& e : *v) {
        if (!e.is_string()) {
          errs_.push_back(path(key) + " must be an array of strings");
          return;
        }
        vals.push_back(e.get<std::string>());
      }
      out = std::move(vals);
    }
  }

  void finish() {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) errs_.push_back("unknown key \"" + path(it.key()) + "\"");
  }

 private:
  const json* get(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }
  std::string where() const { return prefix_.empty() ? "config root" : prefix_; }

  const json* j_;
  std::string prefix_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

void check_value_constraints(RunConfig& cfg, std::vector<std::string>& errs) {
  cfg.train.collect_errors(errs);

  try {
    cfg.filter.validate();
  } catch (const validation_error& e) {
    errs.push_back(e.what());
  }

  const auto& tex = cfg.network.texture;
  if (tex.backbone != "resnet34" && tex.backbone != "small") {
    errs.push_back("network.texture.backbone must be \"resnet34\" or \"small\", got \"" +
                   tex.backbone + "\"");
  } else if (tex.backbone == "small") {
    if (tex.small_channels.size() < 2)
      errs.push_back("network.texture.small_channels needs at least 2 stages");
    else if (tex.small_decoder.size() + 1 != tex.small_channels.size())
      errs.push_back("network.texture.small_decoder needs " +
                     std::to_string(tex.small_channels.size() - 1) + " entries for " +
                     std::to_string(tex.small_channels.size()) + " encoder stages, got " +
                     std::to_string(tex.small_decoder.size()));
    for (long c : tex.small_channels)
      if (c < 1) {
        errs.push_back("network.texture.small_channels entries must be positive");
        break;
      }
    for (long c : tex.small_decoder)
      if (c < 1) {
        errs.push_back("network.texture.small_decoder entries must be positive");
        break;
      }
  }

  if (cfg.network.use_temporal) {
    try {
      cfg.network.temporal.validate();
    } catch (const validation_error& e) {
      errs.push_back(e.what());
    }
    try {
      cfg.network.fusion.validate();
    } catch (const validation_error& e) {
      errs.push_back(e.what());
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw validation_error("invalid config " + source + ": " + e.what());
  }

  RunConfig cfg;
  std::vector<std::string> errs;

  Section root(&j, "", errs);

  Section paths(root.child("paths"), "paths", errs);
  paths.string("dataset", cfg.dataset);
  paths.string("out", cfg.out);
  paths.finish();

  Section tr(root.child("train"), "train", errs);
  tr.number("lr", cfg.train.lr);
  tr.number("momentum", cfg.train.momentum);
  tr.integer("plateau_patience", cfg.train.plateau_patience);
  tr.number("plateau_factor", cfg.train.plateau_factor);
  tr.integer("early_stop_patience", cfg.train.early_stop_patience);
  tr.integer("max_epochs", cfg.train.max_epochs);
  tr.integer("batch_size", cfg.train.batch_size);
  tr.unsigned64("seed", cfg.train.seed);
  tr.number("modality_dropout_threshold", cfg.train.modality_dropout_threshold);
  tr.number("augmentation_prob", cfg.train.augmentation_prob);
  tr.boolean("eval_train_miou", cfg.train.eval_train_miou);
  tr.number("stop_at_train_miou", cfg.train.stop_at_train_miou);
  tr.finish();

  std::vector<std::string> strategy_names;
  root.string_list("strategies", strategy_names);
  cfg.strategies = train::Strategies::from_names(strategy_names, errs);

  Section fl(root.child("filter"), "filter", errs);
  fl.integer("prob_threshold", cfg.filter.prob_threshold);
  fl.number("coverage_threshold", cfg.filter.coverage_threshold);
  fl.finish();

  const json* net_obj = root.child("network");
  Section net(net_obj, "network", errs);
  net.boolean("use_temporal", cfg.network.use_temporal);

  Section tex(net.child("texture"), "network.texture", errs);
  tex.string("backbone", cfg.network.texture.backbone);
  tex.integer_list("small_channels", cfg.network.texture.small_channels);
  tex.integer_list("small_decoder", cfg.network.texture.small_decoder);
  tex.finish();

  Section tem(net.child("temporal"), "network.temporal", errs);
  tem.integer_list("encoder_widths", cfg.network.temporal.encoder_widths);
  tem.integer_list("decoder_widths", cfg.network.temporal.decoder_widths);
  tem.integer("n_heads", cfg.network.temporal.n_heads);
  tem.integer("d_k", cfg.network.temporal.d_k);
  tem.finish();

  Section fu(net.child("fusion"), "network.fusion", errs);
  fu.integer("sat_superpatch_size", cfg.network.fusion.sat_superpatch_size);
  fu.integer("footprint_px", cfg.network.fusion.footprint_px);
  fu.boolean("use_cropped", cfg.network.fusion.use_cropped);
  fu.boolean("use_collapsed", cfg.network.fusion.use_collapsed);
  fu.integer("cropped_kernel", cfg.network.fusion.cropped_kernel);
  fu.integer_list("mlp_hidden", cfg.network.fusion.mlp_hidden);
  fu.number("mlp_dropout", cfg.network.fusion.mlp_dropout);
  fu.finish();

  net.finish();
  root.finish();

  cfg.network.use_metadata = cfg.strategies.metadata;

  if (errs.empty()) check_value_constraints(cfg, errs);

  if (!errs.empty()) {
    std::string msg = "invalid config " + source + ":";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw validation_error(msg);
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

}  // namespace flair

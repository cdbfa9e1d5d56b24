#include <doctest.h>

#include <fstream>

#include "flair/config.hpp"
#include "flair/train/checkpoint.hpp"

using namespace flair;
namespace fs = std::filesystem;

namespace {

std::string catch_message(const std::string& text) {
  try {
    parse_run_config(text, "test");
  } catch (const validation_error& e) {
    return e.what();
  }
  return "";
}

net::UTTConfig miniature_config() {
  net::UTTConfig cfg;
  cfg.texture.backbone = "small";
  cfg.texture.small_channels = {4, 8};
  cfg.texture.small_decoder = {4};
  cfg.temporal.encoder_widths = {4, 8};
  cfg.temporal.decoder_widths = {4, 8};
  cfg.temporal.n_heads = 2;
  cfg.temporal.d_k = 2;
  cfg.fusion.sat_superpatch_size = 8;
  cfg.fusion.footprint_px = 4;
  cfg.fusion.mlp_dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("an empty config resolves to the defaults") {
  RunConfig cfg = parse_run_config("{}", "test");
  CHECK(cfg.train.lr == 0.001);
  CHECK(cfg.train.momentum == 0.9);
  CHECK(cfg.train.plateau_patience == 10);
  CHECK(cfg.train.plateau_factor == 0.5);
  CHECK(cfg.train.early_stop_patience == 30);
  CHECK(cfg.train.max_epochs == 100);
  CHECK(cfg.train.batch_size == 10);
  CHECK(cfg.train.seed == 2022);
  CHECK(cfg.network.texture.backbone == "resnet34");
  CHECK(cfg.network.use_temporal);
  CHECK(!cfg.network.use_metadata);
  CHECK(!cfg.strategies.filter);
  CHECK(!cfg.strategies.augment);
  CHECK(cfg.filter.prob_threshold == 50);
  CHECK(cfg.filter.coverage_threshold == 0.60);
}

TEST_CASE("a full config reaches every field") {
  std::string text = R"({
    "paths": {"dataset": "/data/ds", "out": "/data/out"},
    "train": {"lr": 0.01, "momentum": 0.8, "plateau_patience": 3, "plateau_factor": 0.25,
              "early_stop_patience": 7, "max_epochs": 42, "batch_size": 5, "seed": 99,
              "modality_dropout_threshold": 0.7, "augmentation_prob": 0.9,
              "eval_train_miou": true, "stop_at_train_miou": 0.5},
    "strategies": ["filter", "monthly_average", "augment", "modality_dropout", "metadata"],
    "filter": {"prob_threshold": 40, "coverage_threshold": 0.8},
    "network": {
      "use_temporal": true,
      "texture": {"backbone": "small", "small_channels": [8, 16, 24], "small_decoder": [16, 8]},
      "temporal": {"encoder_widths": [8, 16], "decoder_widths": [8, 16], "n_heads": 2, "d_k": 4},
      "fusion": {"sat_superpatch_size": 20, "footprint_px": 4, "use_cropped": true,
                 "use_collapsed": false, "cropped_kernel": 3, "mlp_hidden": [4, 8, 0],
                 "mlp_dropout": 0.2}
    }
  })";
  RunConfig cfg = parse_run_config(text, "test");
  CHECK(cfg.dataset == "/data/ds");
  CHECK(cfg.out == "/data/out");
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.train.momentum == 0.8);
  CHECK(cfg.train.seed == 99);
  CHECK(cfg.train.eval_train_miou);
  CHECK(cfg.train.stop_at_train_miou == 0.5);
  CHECK(cfg.strategies.filter);
  CHECK(cfg.strategies.monthly_average);
  CHECK(cfg.strategies.augment);
  CHECK(cfg.strategies.modality_dropout);
  CHECK(cfg.strategies.metadata);
  CHECK(cfg.network.use_metadata);  // mirrored from the metadata strategy
  CHECK(cfg.filter.prob_threshold == 40);
  CHECK(cfg.network.texture.small_channels == std::vector<long>{8, 16, 24});
  CHECK(cfg.network.temporal.d_k == 4);
  CHECK(cfg.network.fusion.cropped_kernel == 3);
  CHECK(!cfg.network.fusion.use_collapsed);
  CHECK(cfg.network.fusion.mlp_dropout == 0.2);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK(catch_message(R"({"bogus": 1})").find("unknown key \"bogus\"") != std::string::npos);
  CHECK(catch_message(R"({"train": {"lrx": 1}})").find("unknown key \"train.lrx\"") !=
        std::string::npos);
  CHECK(catch_message(R"({"paths": {"datasets": "x"}})").find("unknown key \"paths.datasets\"") !=
        std::string::npos);
  CHECK(catch_message(R"({"network": {"texture": {"backbones": "x"}}})")
            .find("unknown key \"network.texture.backbones\"") != std::string::npos);
  CHECK(catch_message(R"({"network": {"fusion": {"kernel": 3}}})")
            .find("unknown key \"network.fusion.kernel\"") != std::string::npos);
}

TEST_CASE("every problem is listed at once") {
  std::string msg = catch_message(R"({
    "bogus": 1,
    "train": {"lr": -1, "batch_size": 0, "nope": true},
    "strategies": ["filter", "telepathy"],
    "filter": {"prob_threshold": 200}
  })");
  CHECK(msg.find("unknown key \"bogus\"") != std::string::npos);
  CHECK(msg.find("unknown key \"train.nope\"") != std::string::npos);
  CHECK(msg.find("unknown strategy 'telepathy'") != std::string::npos);
  // Value constraints report only once the structure is sound, so the lr and
  // threshold complaints surface on a second pass.
  std::string msg2 = catch_message(R"({
    "train": {"lr": -1, "batch_size": 0},
    "filter": {"prob_threshold": 200}
  })");
  CHECK(msg2.find("train.lr") != std::string::npos);
  CHECK(msg2.find("train.batch_size") != std::string::npos);
  CHECK(msg2.find("prob_threshold") != std::string::npos);
}

TEST_CASE("type errors name the offending key") {
  CHECK(catch_message(R"({"train": {"lr": "fast"}})").find("train.lr must be a number") !=
        std::string::npos);
  CHECK(catch_message(R"({"train": {"max_epochs": 1.5}})")
            .find("train.max_epochs must be an integer") != std::string::npos);
  CHECK(catch_message(R"({"strategies": "filter"})")
            .find("strategies must be an array of strings") != std::string::npos);
  CHECK(catch_message(R"({"network": {"texture": {"small_channels": [4, "x"]}}})")
            .find("network.texture.small_channels must be an array of integers") !=
        std::string::npos);
  CHECK(catch_message(R"({"train": 3})").find("train must be an object") != std::string::npos);
}

TEST_CASE("network constraints are validated from the config") {
  CHECK(catch_message(R"({"network": {"texture": {"backbone": "vgg"}}})").find("backbone") !=
        std::string::npos);
  CHECK(catch_message(
            R"({"network": {"texture": {"backbone": "small", "small_channels": [4, 8, 16], "small_decoder": [4]}}})")
            .find("small_decoder") != std::string::npos);
  CHECK(catch_message(
            R"({"network": {"temporal": {"encoder_widths": [6, 8], "decoder_widths": [6, 8], "n_heads": 4}}})")
            .find("head") != std::string::npos);
  CHECK(catch_message(R"({"network": {"fusion": {"cropped_kernel": 2}}})").find("kernel") !=
        std::string::npos);
  // A texture-only net skips the temporal and fusion constraints.
  RunConfig cfg = parse_run_config(
      R"({"network": {"use_temporal": false, "fusion": {"cropped_kernel": 2}}})", "test");
  CHECK(!cfg.network.use_temporal);
}

TEST_CASE("unreadable and malformed files fail cleanly") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), error);
  auto path = fs::temp_directory_path() / "bad_config.json";
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(load_run_config(path), validation_error);
}

TEST_CASE("checkpoints restore the exact parameters and run settings") {
  auto path = fs::temp_directory_path() / "roundtrip.ckpt";
  net::UTTNet<float> net;
  Rng rng(77);
  net.init(miniature_config(), rng);

  train::Strategies strat;
  strat.filter = true;
  strat.augment = true;
  prep::FilterConfig filter{35, 0.75};
  train::save_checkpoint(path, net, 4242, strat, filter);

  net::UTTNet<float> loaded;
  train::CheckpointInfo info = train::load_checkpoint(path, loaded);
  CHECK(info.seed == 4242);
  CHECK(info.strategies.filter);
  CHECK(info.strategies.augment);
  CHECK(!info.strategies.monthly_average);
  CHECK(info.filter.prob_threshold == 35);
  CHECK(info.filter.coverage_threshold == 0.75);
  CHECK(info.class_names.size() == size_t(kNumClasses));
  CHECK(info.class_names[0] == "building");
  CHECK(info.config.texture.small_channels == std::vector<long>{4, 8});

  nn::ParamList<float> a, b;
  net.params(a);
  loaded.params(b);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    REQUIRE(a[i].p->v.shape == b[i].p->v.shape);
    CHECK(a[i].p->v.data == b[i].p->v.data);  // bitwise
  }

  // The header alone is enough to inspect a run.
  train::CheckpointInfo header = train::read_checkpoint_info(path);
  CHECK(header.seed == 4242);
  CHECK(header.config.fusion.footprint_px == 4);
}

TEST_CASE("corrupt checkpoints are refused with a reason") {
  auto dir = fs::temp_directory_path();
  auto good = dir / "good.ckpt";
  net::UTTNet<float> net;
  Rng rng(3);
  net.init(miniature_config(), rng);
  train::save_checkpoint(good, net, 1, {}, {});

  auto bad_magic = dir / "bad_magic.ckpt";
  {
    std::vector<char> bytes;
    std::ifstream f(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    bytes[0] = 'X';
    std::ofstream(bad_magic, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
  }
  net::UTTNet<float> sink;
  CHECK_THROWS_AS(train::load_checkpoint(bad_magic, sink), format_error);

  auto truncated = dir / "truncated.ckpt";
  {
    std::vector<char> bytes;
    std::ifstream f(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - bytes.size() / 3);
    std::ofstream(truncated, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(train::load_checkpoint(truncated, sink), format_error);

  CHECK_THROWS_AS(train::load_checkpoint(dir / "never_written.ckpt", sink), error);
}

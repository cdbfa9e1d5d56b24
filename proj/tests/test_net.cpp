#include <doctest.h>

#include <cmath>
#include <set>

#include "flair/net/utt.hpp"
#include "flair/rng.hpp"

using namespace flair;

namespace {

net::UTTConfig miniature_config() {
  net::UTTConfig cfg;
  cfg.texture.backbone = "small";
  cfg.texture.small_channels = {4, 8};
  cfg.texture.small_decoder = {4};
  cfg.temporal.encoder_widths = {4, 8};
  cfg.temporal.decoder_widths = {4, 8};
  cfg.temporal.n_heads = 2;
  cfg.temporal.d_k = 2;
  cfg.fusion.footprint_px = 4;
  cfg.fusion.sat_superpatch_size = 8;
  cfg.fusion.mlp_dropout = 0.0;
  return cfg;
}

template <class T>
Tensor<T> random_tensor(const std::vector<long>& shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(shape);
  for (auto& v : t.data) v = T(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("texture stage geometry halves once per stage") {
  Rng rng(1);
  net::TextureConfig small;
  small.backbone = "small";
  small.small_channels = {12, 16, 24, 32};
  small.small_decoder = {24, 16, 12};
  net::TextureBranch<float> tb;
  tb.init(small, rng);
  auto specs = tb.stage_specs(32);
  REQUIRE(specs.size() == 4);
  long want_hw[4] = {16, 8, 4, 2};
  long want_ch[4] = {12, 16, 24, 32};
  for (int i = 0; i < 4; ++i) {
    CHECK(specs[size_t(i)].channels == want_ch[i]);
    CHECK(specs[size_t(i)].height == want_hw[i]);
    CHECK(specs[size_t(i)].width == want_hw[i]);
  }
  // Odd sizes round up at each halving.
  auto odd = tb.stage_specs(37);
  CHECK(odd[0].height == 19);
  CHECK(odd[1].height == 10);
  CHECK(odd[2].height == 5);
  CHECK(odd[3].height == 3);
}

TEST_CASE("small texture branch maps an aerial patch to per-class logits") {
  Rng rng(2);
  net::TextureConfig cfg;
  cfg.backbone = "small";
  cfg.small_channels = {4, 8};
  cfg.small_decoder = {4};
  net::TextureBranch<float> tb;
  tb.init(cfg, rng);
  auto x = random_tensor<float>({1, kAerialBands, 16, 16}, rng, 0, 1);
  auto y = tb.forward(x, nullptr, nullptr, true);
  REQUIRE(y.shape == std::vector<long>({1, kNumClasses, 16, 16}));
  for (auto v : y.data) CHECK(std::isfinite(v));
}

TEST_CASE("resnet34 backbone matches the reference geometry and parameter count") {
  Rng rng(3);
  net::TextureConfig cfg;
  net::TextureBranch<float> tb;
  tb.init(cfg, rng);

  auto specs = tb.stage_specs(512);
  REQUIRE(specs.size() == 5);
  long want_hw[5] = {256, 128, 64, 32, 16};
  long want_ch[5] = {64, 64, 128, 256, 512};
  for (int i = 0; i < 5; ++i) {
    CHECK(specs[size_t(i)].height == want_hw[i]);
    CHECK(specs[size_t(i)].channels == want_ch[i]);
  }

  nn::ParamList<float> pl;
  tb.params(pl, "texture");
  CHECK(nn::param_count(pl) == 24444381);

  auto x = random_tensor<float>({1, kAerialBands, 32, 32}, rng, 0, 1);
  auto y = tb.forward(x, nullptr, nullptr, true);
  CHECK(y.shape == std::vector<long>({1, kNumClasses, 32, 32}));
}

TEST_CASE("metadata embedding shifts the texture logits") {
  Rng rng(4);
  net::TextureConfig cfg;
  cfg.backbone = "small";
  cfg.small_channels = {4, 8};
  cfg.small_decoder = {4};
  cfg.use_metadata = true;
  net::TextureBranch<float> tb;
  tb.init(cfg, rng);
  auto x = random_tensor<float>({1, kAerialBands, 16, 16}, rng, 0, 1);
  PatchMetadata meta;
  meta.x = 612345.0;
  meta.y = 6421000.0;
  auto mv = net::encode_metadata<float>(meta);
  auto y0 = tb.forward(x, nullptr, nullptr, false);
  auto y1 = tb.forward(x, nullptr, &mv, false);
  double diff = 0;
  for (long i = 0; i < y0.numel(); ++i)
    diff = std::max(diff, std::abs(double(y0.data[size_t(i)]) - double(y1.data[size_t(i)])));
  CHECK(diff > 0);
}

TEST_CASE("fusion masks are added per stage and bad shapes name the stage") {
  Rng rng(5);
  net::TextureConfig cfg;
  cfg.backbone = "small";
  cfg.small_channels = {4, 8};
  cfg.small_decoder = {4};
  net::TextureBranch<float> tb;
  tb.init(cfg, rng);
  auto x = random_tensor<float>({1, kAerialBands, 16, 16}, rng, 0, 1);
  auto base = tb.forward(x, nullptr, nullptr, false);

  auto specs = tb.stage_specs(16);
  std::vector<Tensor<float>> masks(2);
  for (int s = 0; s < 2; ++s) {
    masks[size_t(s)].resize({1, specs[size_t(s)].channels, specs[size_t(s)].height,
                             specs[size_t(s)].width});
    masks[size_t(s)].zero();
  }
  masks[1].data[0] = 50.0f;
  auto shifted = tb.forward(x, &masks, nullptr, false);
  double diff = 0;
  for (long i = 0; i < base.numel(); ++i)
    diff = std::max(diff, std::abs(double(base.data[size_t(i)]) - double(shifted.data[size_t(i)])));
  CHECK(diff > 0);

  masks[1].resize({1, 8, 3, 3});
  masks[1].zero();
  CHECK_THROWS_WITH_AS(tb.forward(x, &masks, nullptr, false),
                       doctest::Contains("stage 1"), data_error);

  std::vector<Tensor<float>> too_few(1);
  CHECK_THROWS_AS(tb.forward(x, &too_few, nullptr, false), data_error);
}

TEST_CASE("temporal branch emits sat logits, an embedding, and normalized attention") {
  Rng rng(6);
  net::TemporalConfig cfg;
  cfg.encoder_widths = {4, 8};
  cfg.decoder_widths = {4, 8};
  cfg.n_heads = 2;
  cfg.d_k = 2;
  net::TemporalBranch<float> tb;
  tb.init(cfg, rng);
  auto x = random_tensor<float>({3, kSenBands, 8, 8}, rng, 0, 0.3);
  std::vector<int> dates{20, 50, 80};
  auto out = tb.forward(x, dates);
  CHECK(out.sat_logits.shape == std::vector<long>({1, kNumClasses, 8, 8}));
  CHECK(out.embedding.shape == std::vector<long>({1, 4, 8, 8}));

  // Attention lives at the lowest level and each (head, pixel) row is a
  // distribution over the dates.
  REQUIRE(tb.ltae.attn.shape == std::vector<long>({2, 3, 4, 4}));
  for (long g = 0; g < 2; ++g)
    for (long p = 0; p < 16; ++p) {
      double s = 0;
      for (long t = 0; t < 3; ++t) s += tb.ltae.attn.data[size_t((g * 3 + t) * 16 + p)];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("temporal branch is invariant to date order") {
  Rng rng(7);
  net::TemporalConfig cfg;
  cfg.encoder_widths = {4, 8};
  cfg.decoder_widths = {4, 8};
  cfg.n_heads = 2;
  cfg.d_k = 2;
  net::TemporalBranch<double> tb;
  tb.init(cfg, rng);

  auto x = random_tensor<double>({3, kSenBands, 8, 8}, rng, 0, 0.3);
  std::vector<int> dates{20, 50, 80};
  auto out1 = tb.forward(x, dates);

  long perm[3] = {2, 0, 1};
  Tensor<double> x2({3, kSenBands, 8, 8});
  std::vector<int> dates2(3);
  long stride = kSenBands * 64;
  for (long t = 0; t < 3; ++t) {
    for (long i = 0; i < stride; ++i)
      x2.data[size_t(t * stride + i)] = x.data[size_t(perm[t] * stride + i)];
    dates2[size_t(t)] = dates[size_t(perm[t])];
  }
  auto out2 = tb.forward(x2, dates2);

  for (long i = 0; i < out1.embedding.numel(); ++i)
    CHECK(out1.embedding.data[size_t(i)] ==
          doctest::Approx(out2.embedding.data[size_t(i)]).epsilon(1e-10));
  for (long i = 0; i < out1.sat_logits.numel(); ++i)
    CHECK(out1.sat_logits.data[size_t(i)] ==
          doctest::Approx(out2.sat_logits.data[size_t(i)]).epsilon(1e-10));
}

TEST_CASE("single-date series collapses to weight one") {
  Rng rng(8);
  net::TemporalConfig cfg;
  cfg.encoder_widths = {4, 8};
  cfg.decoder_widths = {4, 8};
  cfg.n_heads = 2;
  cfg.d_k = 2;
  net::TemporalBranch<float> tb;
  tb.init(cfg, rng);
  auto x = random_tensor<float>({1, kSenBands, 8, 8}, rng, 0, 0.3);
  auto out = tb.forward(x, {140});
  CHECK(out.embedding.shape == std::vector<long>({1, 4, 8, 8}));
  for (auto v : tb.ltae.attn.data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("temporal branch rejects malformed input") {
  Rng rng(9);
  net::TemporalConfig cfg;
  cfg.encoder_widths = {4, 8};
  cfg.decoder_widths = {4, 8};
  cfg.n_heads = 2;
  cfg.d_k = 2;
  net::TemporalBranch<float> tb;
  tb.init(cfg, rng);

  Tensor<float> bad_bands({2, 9, 8, 8});
  bad_bands.zero();
  CHECK_THROWS_AS(tb.forward(bad_bands, {10, 20}), data_error);

  Tensor<float> empty_t({0, kSenBands, 8, 8});
  CHECK_THROWS_AS(tb.forward(empty_t, {}), data_error);

  Tensor<float> ok({2, kSenBands, 8, 8});
  ok.zero();
  CHECK_THROWS_AS(tb.forward(ok, {10}), data_error);
}

TEST_CASE("day position encoding interleaves a sin/cos frequency ladder") {
  auto pe = net::day_position_encoding(45, 8);
  REQUIRE(pe.size() == 8);
  CHECK(pe[0] == doctest::Approx(std::sin(45.0)).epsilon(1e-12));
  CHECK(pe[1] == doctest::Approx(std::cos(45.0)).epsilon(1e-12));
  double w1 = std::pow(10000.0, -2.0 / 8.0);
  CHECK(pe[2] == doctest::Approx(std::sin(45.0 * w1)).epsilon(1e-12));
  CHECK(pe[3] == doctest::Approx(std::cos(45.0 * w1)).epsilon(1e-12));
}

TEST_CASE("metadata encoding embeds easting then northing") {
  PatchMetadata meta;
  meta.x = 3.25;
  meta.y = 7.5;
  auto v = net::encode_metadata<double>(meta);
  REQUIRE(v.shape == std::vector<long>({1, 32}));
  CHECK(v.at2(0, 0) == doctest::Approx(std::sin(3.25)).epsilon(1e-12));
  CHECK(v.at2(0, 1) == doctest::Approx(std::cos(3.25)).epsilon(1e-12));
  CHECK(v.at2(0, 16) == doctest::Approx(std::sin(7.5)).epsilon(1e-12));
  CHECK(v.at2(0, 17) == doctest::Approx(std::cos(7.5)).epsilon(1e-12));
}

TEST_CASE("collapsed fusion broadcasts an MLP of the spatial mean") {
  Rng rng(10);
  net::CollapsedFusion<double> cf;
  cf.init(4, 4, 8, 6, 0.0, rng);
  auto emb = random_tensor<double>({1, 4, 5, 5}, rng, -1, 1);
  Rng fwd_rng(0);
  auto y = cf.forward(emb, 3, 3, false, fwd_rng);
  REQUIRE(y.shape == std::vector<long>({1, 6, 3, 3}));

  // Every pixel of a channel carries the same value.
  for (long c = 0; c < 6; ++c)
    for (long p = 1; p < 9; ++p)
      CHECK(y.data[size_t(c * 9 + p)] == y.data[size_t(c * 9)]);

  // Hand-rolled mean -> fc1 -> relu -> fc2 -> relu -> fc3.
  std::vector<double> m(4, 0.0);
  for (long c = 0; c < 4; ++c) {
    for (long p = 0; p < 25; ++p) m[size_t(c)] += emb.data[size_t(c * 25 + p)];
    m[size_t(c)] /= 25.0;
  }
  auto apply = [](const nn::Linear<double>& fc, const std::vector<double>& in, bool relu) {
    std::vector<double> out(size_t(fc.out_f), 0.0);
    for (long o = 0; o < fc.out_f; ++o) {
      double s = fc.b.v.data[size_t(o)];
      for (long i = 0; i < fc.in_f; ++i)
        s += fc.w.v.data[size_t(o * fc.in_f + i)] * in[size_t(i)];
      out[size_t(o)] = relu ? std::max(0.0, s) : s;
    }
    return out;
  };
  auto h = apply(cf.fc1, m, true);
  h = apply(cf.fc2, h, true);
  h = apply(cf.fc3, h, false);
  for (long c = 0; c < 6; ++c)
    CHECK(y.data[size_t(c * 9)] == doctest::Approx(h[size_t(c)]).epsilon(1e-12));
}

TEST_CASE("cropped fusion crops the centroid footprint") {
  Rng rng(11);
  net::CroppedFusion<double> cf;
  cf.init(3, 3, 1, rng);
  // Identity conv isolates the crop + resize path.
  cf.conv.w.v.zero();
  for (long i = 0; i < 3; ++i) cf.conv.w.v.data[size_t(i * 3 + i)] = 1.0;
  cf.conv.b.v.zero();

  auto emb = random_tensor<double>({1, 3, 8, 8}, rng, -1, 1);
  auto y = cf.forward(emb, 2, 5, 4, 4, 4);
  REQUIRE(y.shape == std::vector<long>({1, 3, 4, 4}));
  long r0 = ds::crop_start(2, 4, 8);
  long c0 = ds::crop_start(5, 4, 8);
  CHECK(r0 == 0);
  CHECK(c0 == 3);
  for (long c = 0; c < 3; ++c)
    for (long r = 0; r < 4; ++r)
      for (long cc = 0; cc < 4; ++cc)
        CHECK(y.data[size_t((c * 4 + r) * 4 + cc)] ==
              doctest::Approx(emb.data[size_t((c * 8 + r0 + r) * 8 + c0 + cc)]).epsilon(1e-12));
}

TEST_CASE("zero fusion parameters leave the texture logits untouched") {
  Rng rng(12);
  auto cfg = miniature_config();
  net::UTTNet<float> utt;
  utt.init(cfg, rng);

  nn::ParamList<float> pl;
  utt.params(pl);
  for (auto& pr : pl)
    if (pr.name.rfind("fusion.", 0) == 0) pr.p->v.zero();

  auto aerial = random_tensor<float>({1, kAerialBands, 16, 16}, rng, 0, 255);
  auto sat = random_tensor<float>({3, kSenBands, 8, 8}, rng, 0, 3000);
  std::vector<int> dates{30, 91, 152};
  Rng r1(77), r2(77);
  auto fused = utt.forward(aerial, &sat, dates, 4, 4, nullptr, false, r1);
  auto alone = utt.forward(aerial, nullptr, dates, 4, 4, nullptr, false, r2);
  REQUIRE(fused.aerial_logits.numel() == alone.aerial_logits.numel());
  for (long i = 0; i < fused.aerial_logits.numel(); ++i)
    CHECK(fused.aerial_logits.data[size_t(i)] == alone.aerial_logits.data[size_t(i)]);

  CHECK(fused.sat_logits.shape == std::vector<long>({1, kNumClasses, 8, 8}));
  CHECK(fused.sat_logits_aerial.shape == std::vector<long>({1, kNumClasses, 16, 16}));
  CHECK(alone.sat_logits.empty());
  CHECK(alone.sat_logits_aerial.empty());
}

TEST_CASE("network configs reject inconsistent widths") {
  net::TemporalConfig t;
  t.encoder_widths = {6, 8};
  t.decoder_widths = {6, 8};
  t.n_heads = 4;
  CHECK_THROWS_AS(t.validate(), validation_error);

  net::TemporalConfig t2;
  t2.encoder_widths = {4, 8};
  t2.decoder_widths = {4, 4};
  t2.n_heads = 2;
  CHECK_THROWS_AS(t2.validate(), validation_error);

  net::FusionConfig f;
  f.cropped_kernel = 2;
  CHECK_THROWS_AS(f.validate(), validation_error);
  f = {};
  f.use_cropped = false;
  f.use_collapsed = false;
  CHECK_THROWS_AS(f.validate(), validation_error);
  f = {};
  f.footprint_px = 0;
  CHECK_THROWS_AS(f.validate(), validation_error);
  f = {};
  f.footprint_px = 50;
  CHECK_THROWS_AS(f.validate(), validation_error);
  f = {};
  f.mlp_hidden = {0, 0};
  CHECK_THROWS_AS(f.validate(), validation_error);
  f = {};
  f.mlp_dropout = 1.0;
  CHECK_THROWS_AS(f.validate(), validation_error);

  Rng rng(13);
  auto cfg = miniature_config();
  cfg.fusion.mlp_hidden = {0, 0, 5};  // stage widths are 4 and 8
  net::UTTNet<float> utt;
  CHECK_THROWS_WITH_AS(utt.init(cfg, rng), doctest::Contains("stage"), validation_error);

  net::TextureConfig bad_backbone;
  bad_backbone.backbone = "vgg";
  net::TextureBranch<float> tb;
  CHECK_THROWS_AS(tb.init(bad_backbone, rng), validation_error);

  net::TextureConfig short_dec;
  short_dec.backbone = "small";
  short_dec.small_channels = {4, 8, 16};
  short_dec.small_decoder = {8};
  CHECK_THROWS_AS(tb.init(short_dec, rng), validation_error);
}

TEST_CASE("fused network parameter names are unique and module-prefixed") {
  Rng rng(14);
  auto cfg = miniature_config();
  cfg.use_metadata = true;
  net::UTTNet<float> utt;
  utt.init(cfg, rng);
  nn::ParamList<float> pl;
  utt.params(pl);
  std::set<std::string> names;
  bool texture_seen = false, temporal_seen = false, cropped_seen = false, collapsed_seen = false;
  for (auto& pr : pl) {
    names.insert(pr.name);
    if (pr.name.rfind("texture", 0) == 0) texture_seen = true;
    if (pr.name.rfind("temporal", 0) == 0) temporal_seen = true;
    if (pr.name.rfind("fusion.cropped", 0) == 0) cropped_seen = true;
    if (pr.name.rfind("fusion.collapsed", 0) == 0) collapsed_seen = true;
  }
  CHECK(names.size() == pl.size());
  CHECK(texture_seen);
  CHECK(temporal_seen);
  CHECK(cropped_seen);
  CHECK(collapsed_seen);
}

#pragma once

#include "flair/net/fusion.hpp"
#include "flair/net/temporal.hpp"
#include "flair/net/texture.hpp"

namespace flair::net {

struct UTTConfig {
  TextureConfig texture;
  TemporalConfig temporal;
  FusionConfig fusion;
  bool use_temporal = true;
  bool use_metadata = false;

  void validate() const {
    temporal.validate();
    if (use_temporal) fusion.validate();
  }
};

// The fused two-branch network. Forward runs one sample at a time: the
// texture branch sees the aerial patch, the temporal branch the matching
// super-patch series, and the fusion modules translate the temporal
// embedding into additive masks for every texture encoder stage. Batching
// is gradient accumulation across successive samples.
template <class T>
struct UTTNet {
  UTTConfig cfg;
  TextureBranch<T> texture;
  TemporalBranch<T> temporal;
  std::vector<CroppedFusion<T>> cropped;
  std::vector<CollapsedFusion<T>> collapsed;
  SatLogitsToAerial<T> sat_proj;

  bool temporal_ran = false;  // per forward
  bool sat_out_ran = false;
  Tensor<T> embedding_saved;

  void init(const UTTConfig& c, Rng& rng) {
    cfg = c;
    cfg.texture.use_metadata = cfg.use_metadata;
    cfg.validate();
    texture.init(cfg.texture, rng);
    if (cfg.use_temporal) {
      temporal.init(cfg.temporal, rng);
      long e = cfg.temporal.embedding_channels();
      long stages = texture.n_stages;
      if (cfg.fusion.use_cropped) cropped.resize(size_t(stages));
      if (cfg.fusion.use_collapsed) collapsed.resize(size_t(stages));
      for (long s = 0; s < stages; ++s) {
        long out_ch = texture.stage_ch[size_t(s)];
        if (cfg.fusion.use_cropped)
          cropped[size_t(s)].init(e, out_ch, cfg.fusion.cropped_kernel, rng);
        if (cfg.fusion.use_collapsed) {
          long h0 = cfg.fusion.mlp_hidden[0] > 0 ? cfg.fusion.mlp_hidden[0] : e;
          long h1 = cfg.fusion.mlp_hidden[1] > 0 ? cfg.fusion.mlp_hidden[1] : 2 * e;
          if (cfg.fusion.mlp_hidden[2] > 0 && cfg.fusion.mlp_hidden[2] != out_ch)
            throw validation_error("mlp_hidden[2] is " + std::to_string(cfg.fusion.mlp_hidden[2]) +
                                   " but stage " + std::to_string(s) + " needs " +
                                   std::to_string(out_ch));
          collapsed[size_t(s)].init(e, h0, h1, out_ch, cfg.fusion.mlp_dropout, rng);
        }
      }
    }
  }

  void params(nn::ParamList<T>& out) {
    texture.params(out, "texture");
    if (cfg.use_temporal) {
      temporal.params(out, "temporal");
      for (size_t s = 0; s < cropped.size(); ++s)
        cropped[s].params(out, "fusion.cropped" + std::to_string(s));
      for (size_t s = 0; s < collapsed.size(); ++s)
        collapsed[s].params(out, "fusion.collapsed" + std::to_string(s));
    }
  }

  struct Output {
    Tensor<T> aerial_logits;      // (1, n_classes, H, H)
    Tensor<T> sat_logits;         // (1, n_classes, S, S) on the sat grid
    Tensor<T> sat_logits_aerial;  // (1, n_classes, H, H) cropped + resized
  };

  // aerial_raw: (1, 5, H, H) in 0..255; sat_raw: (T, 10, S, S) reflectances
  // or null to run texture-only (the modality-dropout path); centroid in
  // local super-patch pixels.
  Output forward(const Tensor<T>& aerial_raw, const Tensor<T>* sat_raw,
                 const std::vector<int>& dates, long centroid_r, long centroid_c,
                 const PatchMetadata* meta, bool train, Rng& rng) {
    if (aerial_raw.shape.size() != 4 || aerial_raw.shape[0] != 1 ||
        aerial_raw.shape[1] != kAerialBands || aerial_raw.shape[2] != aerial_raw.shape[3])
      throw data_error("aerial input must be (1, " + std::to_string(kAerialBands) +
                       ", H, H), got " + aerial_raw.shape_str());
    long hw = aerial_raw.shape[2];

    Tensor<T> aerial = aerial_raw;
    for (auto& v : aerial.data) v /= T(255);

    Output out;
    temporal_ran = cfg.use_temporal && sat_raw != nullptr;
    sat_out_ran = false;

    Tensor<T> meta_vec;
    if (cfg.use_metadata && meta) meta_vec = encode_metadata<T>(*meta);

    if (!temporal_ran) {
      out.aerial_logits =
          texture.forward(aerial, nullptr, meta_vec.empty() ? nullptr : &meta_vec, train);
      return out;
    }

    Tensor<T> sat = *sat_raw;
    for (auto& v : sat.data) v /= T(10000);
    auto tb = temporal.forward(sat, dates);
    embedding_saved = tb.embedding;
    out.sat_logits = tb.sat_logits;

    auto specs = texture.stage_specs(hw);
    std::vector<Tensor<T>> masks(size_t(texture.n_stages));
    for (long s = 0; s < texture.n_stages; ++s) {
      Tensor<T> m;
      if (cfg.fusion.use_cropped)
        m = cropped[size_t(s)].forward(tb.embedding, centroid_r, centroid_c,
                                       cfg.fusion.footprint_px, specs[size_t(s)].height,
                                       specs[size_t(s)].width);
      if (cfg.fusion.use_collapsed) {
        Tensor<T> mc = collapsed[size_t(s)].forward(tb.embedding, specs[size_t(s)].height,
                                                    specs[size_t(s)].width, train, rng);
        if (m.empty()) m = std::move(mc);
        else
          for (long i = 0; i < m.numel(); ++i) m.data[size_t(i)] += mc.data[size_t(i)];
      }
      masks[size_t(s)] = std::move(m);
    }

    out.sat_logits_aerial =
        sat_proj.forward(tb.sat_logits, centroid_r, centroid_c, cfg.fusion.footprint_px, hw);
    sat_out_ran = true;

    out.aerial_logits =
        texture.forward(aerial, &masks, meta_vec.empty() ? nullptr : &meta_vec, train);
    return out;
  }

  // g_sat_aerial may be empty when the sat loss is unused; it must be empty
  // when the last forward ran texture-only.
  void backward(const Tensor<T>& g_aerial, const Tensor<T>& g_sat_aerial) {
    if (!temporal_ran) {
      if (!g_sat_aerial.empty())
        throw data_error("sat gradient given, but the last forward had no temporal branch");
      texture.backward(g_aerial, nullptr);
      return;
    }
    std::vector<Tensor<T>> grad_masks;
    texture.backward(g_aerial, &grad_masks);

    Tensor<T> g_emb(embedding_saved.shape);
    g_emb.zero();
    for (long s = 0; s < texture.n_stages; ++s) {
      const Tensor<T>& gm = grad_masks[size_t(s)];
      if (cfg.fusion.use_cropped) {
        Tensor<T> g = cropped[size_t(s)].backward(gm);
        for (long i = 0; i < g_emb.numel(); ++i) g_emb.data[size_t(i)] += g.data[size_t(i)];
      }
      if (cfg.fusion.use_collapsed) {
        Tensor<T> g = collapsed[size_t(s)].backward(gm);
        for (long i = 0; i < g_emb.numel(); ++i) g_emb.data[size_t(i)] += g.data[size_t(i)];
      }
    }

    Tensor<T> g_sat_raw;
    if (!g_sat_aerial.empty() && sat_out_ran) g_sat_raw = sat_proj.backward(g_sat_aerial);
    temporal.backward(g_emb, g_sat_raw);
  }
};

}  // namespace flair::net

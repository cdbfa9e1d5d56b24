#pragma once

#include "flair/data_model.hpp"
#include "flair/nn/basic.hpp"
#include "flair/nn/conv.hpp"
#include "flair/nn/norm.hpp"

namespace flair::net {

struct FeatureMapSpec {
  long channels = 0;
  long height = 0;
  long width = 0;
};

struct TextureConfig {
  std::string backbone = "resnet34";  // or "small"
  std::vector<long> small_channels = {12, 16, 24, 32};
  std::vector<long> small_decoder = {24, 16, 12};
  long n_classes = kNumClasses;
  bool use_metadata = false;
};

namespace detail {

// conv -> batch norm -> optional relu, the workhorse block of both backbones.
template <class T>
struct ConvBN {
  nn::Conv2d<T> conv;
  nn::BatchNorm2d<T> bn;
  nn::ReLU<T> relu;
  bool with_relu = true;

  void init(long in, long out, long k, long s, long p, bool relu_on, Rng& rng) {
    conv.init(in, out, k, s, p, false, rng);  // bias folds into the norm
    bn.init(out);
    with_relu = relu_on;
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    conv.params(out, prefix + ".conv");
    bn.params(out, prefix + ".bn");
  }
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = bn.forward(conv.forward(x), train);
    return with_relu ? relu.forward(y) : y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = with_relu ? relu.backward(gy) : gy;
    return conv.backward(bn.backward(g));
  }
};

template <class T>
struct BasicBlock {
  ConvBN<T> c1;  // relu
  ConvBN<T> c2;  // no relu; applied after the residual add
  ConvBN<T> down;
  bool has_down = false;
  nn::ReLU<T> out_relu;
  Tensor<T> x_saved;

  void init(long in, long out, long stride, Rng& rng) {
    c1.init(in, out, 3, stride, 1, true, rng);
    c2.init(out, out, 3, 1, 1, false, rng);
    has_down = stride != 1 || in != out;
    if (has_down) down.init(in, out, 1, stride, 0, false, rng);
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    c1.params(out, prefix + ".c1");
    c2.params(out, prefix + ".c2");
    if (has_down) down.params(out, prefix + ".down");
  }
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    x_saved = x;
    Tensor<T> y = c2.forward(c1.forward(x, train), train);
    Tensor<T> idn = has_down ? down.forward(x, train) : x;
    for (long i = 0; i < y.numel(); ++i) y.data[size_t(i)] += idn.data[size_t(i)];
    return out_relu.forward(y);
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = out_relu.backward(gy);
    Tensor<T> gx = c1.backward(c2.backward(g));
    Tensor<T> gid = has_down ? down.backward(g) : g;
    for (long i = 0; i < gx.numel(); ++i) gx.data[size_t(i)] += gid.data[size_t(i)];
    return gx;
  }
};

// Nearest-upsample, concat skip, then one or two conv blocks.
template <class T>
struct DecoderBlock {
  nn::UpsampleNearest2x<T> up;
  ConvBN<T> c1, c2;
  bool two_convs = true;
  long skip_ch = 0;
  bool has_skip = false;

  void init(long in, long skip, long out, bool two, Rng& rng) {
    skip_ch = skip;
    has_skip = skip > 0;
    two_convs = two;
    c1.init(in + skip, out, 3, 1, 1, true, rng);
    if (two) c2.init(out, out, 3, 1, 1, true, rng);
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    c1.params(out, prefix + ".c1");
    if (two_convs) c2.params(out, prefix + ".c2");
  }
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* skip, bool train) {
    Tensor<T> u = up.forward(x);
    Tensor<T> cat = has_skip ? nn::concat_channels(u, *skip) : std::move(u);
    Tensor<T> y = c1.forward(cat, train);
    return two_convs ? c2.forward(y, train) : y;
  }
  // Returns grad wrt x; grad wrt skip lands in gskip when a skip exists.
  Tensor<T> backward(const Tensor<T>& gy, Tensor<T>* gskip) {
    Tensor<T> g = c1.backward(two_convs ? c2.backward(gy) : gy);
    if (has_skip) {
      Tensor<T> gu;
      nn::split_channels_grad(g, g.shape[1] - skip_ch, gu, *gskip);
      return up.backward(gu);
    }
    return up.backward(g);
  }
};

}  // namespace detail

// U-Net over the aerial patch. Encoder stage outputs are the fusion and
// metadata injection points; the same (possibly shifted) maps feed the skip
// connections.
template <class T>
struct TextureBranch {
  TextureConfig cfg;

  // resnet34-like backbone
  detail::ConvBN<T> stem;                       // 7x7/2 (or 3x3/2 for small)
  nn::MaxPool2d<T> pool;
  std::vector<detail::BasicBlock<T>> layers[4];  // 3,4,6,3 blocks

  // small backbone
  detail::ConvBN<T> small_refine;
  std::vector<detail::ConvBN<T>> small_down, small_refine2;

  std::vector<detail::DecoderBlock<T>> decoder;
  nn::UpsampleNearest2x<T> final_up;  // small backbone only
  nn::Conv2d<T> head;

  // Metadata pathway: shared 2-layer MLP on the 32-long encoding, then one
  // projection per encoder stage.
  nn::Linear<T> meta_fc1, meta_fc2;
  nn::ReLU<T> meta_relu;
  std::vector<nn::Linear<T>> meta_proj;

  long n_stages = 0;
  std::vector<long> stage_ch;

  // Saved per forward for the backward walk.
  std::vector<Tensor<T>> stage_out;
  std::vector<Tensor<T>> meta_hidden;  // per-stage projected vectors
  Tensor<T> meta_encoded;
  bool meta_active = false;

  void init(const TextureConfig& c, Rng& rng) {
    cfg = c;
    if (cfg.backbone == "resnet34") {
      stage_ch = {64, 64, 128, 256, 512};
      n_stages = 5;
      stem.init(kAerialBands, 64, 7, 2, 3, true, rng);
      const long blocks[4] = {3, 4, 6, 3};
      const long chs[4] = {64, 128, 256, 512};
      long in = 64;
      for (int l = 0; l < 4; ++l) {
        layers[l].resize(size_t(blocks[l]));
        for (long b = 0; b < blocks[l]; ++b) {
          long stride = (l > 0 && b == 0) ? 2 : 1;
          layers[l][size_t(b)].init(b == 0 ? in : chs[l], chs[l], stride, rng);
        }
        in = chs[l];
      }
      const long dec[5] = {256, 128, 64, 32, 16};
      const long skip[5] = {256, 128, 64, 64, 0};
      decoder.resize(5);
      long din = 512;
      for (int i = 0; i < 5; ++i) {
        decoder[size_t(i)].init(din, skip[i], dec[i], true, rng);
        din = dec[i];
      }
      head.init(16, cfg.n_classes, 3, 1, 1, true, rng);
    } else if (cfg.backbone == "small") {
      stage_ch = cfg.small_channels;
      n_stages = long(stage_ch.size());
      if (n_stages < 2) throw validation_error("texture backbone needs at least 2 stages");
      stem.init(kAerialBands, stage_ch[0], 3, 2, 1, true, rng);
      small_refine.init(stage_ch[0], stage_ch[0], 3, 1, 1, true, rng);
      small_down.resize(size_t(n_stages - 1));
      small_refine2.resize(size_t(n_stages - 1));
      for (long i = 1; i < n_stages; ++i) {
        small_down[size_t(i - 1)].init(stage_ch[size_t(i - 1)], stage_ch[size_t(i)], 3, 2, 1,
                                       true, rng);
        small_refine2[size_t(i - 1)].init(stage_ch[size_t(i)], stage_ch[size_t(i)], 3, 1, 1,
                                          true, rng);
      }
      if (long(cfg.small_decoder.size()) != n_stages - 1)
        throw validation_error("small decoder needs " + std::to_string(n_stages - 1) +
                               " widths, got " + std::to_string(cfg.small_decoder.size()));
      decoder.resize(size_t(n_stages - 1));
      long din = stage_ch.back();
      for (long i = 0; i < n_stages - 1; ++i) {
        long sk = stage_ch[size_t(n_stages - 2 - i)];
        decoder[size_t(i)].init(din, sk, cfg.small_decoder[size_t(i)], false, rng);
        din = cfg.small_decoder[size_t(i)];
      }
      head.init(din, cfg.n_classes, 1, 1, 0, true, rng);
    } else {
      throw validation_error("unknown texture backbone '" + cfg.backbone + "'");
    }

    if (cfg.use_metadata) {
      meta_fc1.init(32, 64, rng);
      meta_fc2.init(64, 32, rng);
      meta_proj.resize(size_t(n_stages));
      for (long i = 0; i < n_stages; ++i) meta_proj[size_t(i)].init(32, stage_ch[size_t(i)], rng);
    }
  }

  void params(nn::ParamList<T>& out, const std::string& prefix) {
    stem.params(out, prefix + ".stem");
    if (cfg.backbone == "resnet34") {
      for (int l = 0; l < 4; ++l)
        for (size_t b = 0; b < layers[l].size(); ++b)
          layers[l][b].params(out, prefix + ".layer" + std::to_string(l + 1) + "." +
                                       std::to_string(b));
    } else {
      small_refine.params(out, prefix + ".refine0");
      for (size_t i = 0; i < small_down.size(); ++i) {
        small_down[i].params(out, prefix + ".down" + std::to_string(i + 1));
        small_refine2[i].params(out, prefix + ".refine" + std::to_string(i + 1));
      }
    }
    for (size_t i = 0; i < decoder.size(); ++i)
      decoder[i].params(out, prefix + ".dec" + std::to_string(i));
    head.params(out, prefix + ".head");
    if (cfg.use_metadata) {
      meta_fc1.params(out, prefix + ".meta_fc1");
      meta_fc2.params(out, prefix + ".meta_fc2");
      for (size_t i = 0; i < meta_proj.size(); ++i)
        meta_proj[i].params(out, prefix + ".meta_proj" + std::to_string(i));
    }
  }

  // Stage geometry for a square input of side `hw`. Each stage halves the
  // resolution once (ceil semantics): the stem via its stride, stage 1 of the
  // resnet via the max pool, every other stage via its first stride-2 conv.
  std::vector<FeatureMapSpec> stage_specs(long hw) const {
    std::vector<FeatureMapSpec> specs;
    long cur = (hw + 1) / 2;
    specs.push_back({stage_ch[0], cur, cur});
    for (long i = 1; i < n_stages; ++i) {
      cur = (cur + 1) / 2;
      specs.push_back({stage_ch[size_t(i)], cur, cur});
    }
    return specs;
  }

  // masks: one (N, ch, H, W) tensor per stage or empty; meta: (N, 32).
  Tensor<T> forward(const Tensor<T>& x, const std::vector<Tensor<T>>* masks,
                    const Tensor<T>* meta, bool train) {
    long n = x.shape[0];
    stage_out.assign(size_t(n_stages), {});
    meta_active = meta != nullptr && cfg.use_metadata;
    if (masks && long(masks->size()) != n_stages)
      throw data_error("expected " + std::to_string(n_stages) + " fusion masks, got " +
                       std::to_string(masks->size()));

    if (meta_active) {
      meta_encoded = meta_fc2.forward(meta_relu.forward(meta_fc1.forward(*meta)));
      meta_hidden.assign(size_t(n_stages), {});
    }

    auto inject = [&](Tensor<T>& f, long stage) {
      if (masks && !(*masks)[size_t(stage)].empty()) {
        const Tensor<T>& m = (*masks)[size_t(stage)];
        if (m.shape != f.shape)
          throw data_error("fusion mask for stage " + std::to_string(stage) + " is " +
                           m.shape_str() + ", feature map is " + f.shape_str());
        for (long i = 0; i < f.numel(); ++i) f.data[size_t(i)] += m.data[size_t(i)];
      }
      if (meta_active) {
        Tensor<T> proj = meta_proj[size_t(stage)].forward(meta_encoded);  // (N, ch)
        meta_hidden[size_t(stage)] = proj;
        long ch = f.shape[1], hw = f.shape[2] * f.shape[3];
        for (long b = 0; b < n; ++b)
          for (long c = 0; c < ch; ++c) {
            T v = proj.at2(b, c);
            T* dst = f.ptr() + (b * ch + c) * hw;
            for (long p = 0; p < hw; ++p) dst[p] += v;
          }
      }
      stage_out[size_t(stage)] = f;
    };

    Tensor<T> cur;
    if (cfg.backbone == "resnet34") {
      cur = stem.forward(x, train);
      inject(cur, 0);
      cur = pool.forward(cur);
      for (auto& b : layers[0]) cur = b.forward(cur, train);
      inject(cur, 1);
      for (int l = 1; l < 4; ++l) {
        for (auto& b : layers[l]) cur = b.forward(cur, train);
        inject(cur, l + 1);
      }
    } else {
      cur = small_refine.forward(stem.forward(x, train), train);
      inject(cur, 0);
      for (long i = 1; i < n_stages; ++i) {
        cur = small_refine2[size_t(i - 1)].forward(small_down[size_t(i - 1)].forward(cur, train),
                                                   train);
        inject(cur, i);
      }
    }

    // Decoder consumes stages deepest-first.
    for (size_t d = 0; d < decoder.size(); ++d) {
      long skip_idx = n_stages - 2 - long(d);
      const Tensor<T>* skip = skip_idx >= 0 ? &stage_out[size_t(skip_idx)] : nullptr;
      cur = decoder[d].forward(cur, skip, train);
    }
    if (cfg.backbone == "small") cur = final_up.forward(cur);
    return head.forward(cur);
  }

  // Fills grad_masks (when non-null) with one gradient per stage, matching
  // the masks passed to forward.
  Tensor<T> backward(const Tensor<T>& glogits, std::vector<Tensor<T>>* grad_masks) {
    Tensor<T> g = head.backward(glogits);
    if (cfg.backbone == "small") g = final_up.backward(g);

    std::vector<Tensor<T>> gstage(static_cast<size_t>(n_stages));
    for (long d = long(decoder.size()) - 1; d >= 0; --d) {
      long skip_idx = n_stages - 2 - d;
      Tensor<T> gskip;
      g = decoder[size_t(d)].backward(g, skip_idx >= 0 ? &gskip : nullptr);
      if (skip_idx >= 0) gstage[size_t(skip_idx)] = std::move(gskip);
    }

    if (grad_masks) grad_masks->assign(size_t(n_stages), {});

    // g currently holds the gradient flowing into the deepest stage output.
    auto absorb = [&](Tensor<T>& gcur, long stage) {
      if (!gstage[size_t(stage)].empty())
        for (long i = 0; i < gcur.numel(); ++i)
          gcur.data[size_t(i)] += gstage[size_t(stage)].data[size_t(i)];
      if (grad_masks) (*grad_masks)[size_t(stage)] = gcur;
      if (meta_active) {
        const Tensor<T>& f = stage_out[size_t(stage)];
        long ch = f.shape[1], hw = f.shape[2] * f.shape[3], n = f.shape[0];
        Tensor<T> gproj({n, ch});
        for (long b = 0; b < n; ++b)
          for (long c = 0; c < ch; ++c) {
            const T* src = gcur.ptr() + (b * ch + c) * hw;
            T s = 0;
            for (long p = 0; p < hw; ++p) s += src[p];
            gproj.at2(b, c) = s;
          }
        Tensor<T> gm = meta_proj[size_t(stage)].backward(gproj);
        if (meta_grad_acc.empty()) meta_grad_acc = gm;
        else
          for (long i = 0; i < gm.numel(); ++i) meta_grad_acc.data[size_t(i)] += gm.data[size_t(i)];
      }
    };

    Tensor<T> gx;
    if (cfg.backbone == "resnet34") {
      absorb(g, 4);
      for (int l = 3; l >= 1; --l) {
        for (long b = long(layers[l].size()) - 1; b >= 0; --b)
          g = layers[l][size_t(b)].backward(g);
        absorb(g, l);
      }
      for (long b = long(layers[0].size()) - 1; b >= 0; --b) g = layers[0][size_t(b)].backward(g);
      g = pool.backward(g);
      absorb(g, 0);
      gx = stem.backward(g);
    } else {
      absorb(g, n_stages - 1);
      for (long i = n_stages - 1; i >= 1; --i) {
        g = small_down[size_t(i - 1)].backward(small_refine2[size_t(i - 1)].backward(g));
        absorb(g, i - 1);
      }
      gx = stem.backward(small_refine.backward(g));
    }

    if (meta_active && !meta_grad_acc.empty()) {
      meta_fc1.backward(meta_relu.backward(meta_fc2.backward(meta_grad_acc)));
      meta_grad_acc = {};
    }
    return gx;
  }

private:
  Tensor<T> meta_grad_acc;
};

}  // namespace flair::net

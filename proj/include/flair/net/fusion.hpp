#pragma once

#include "flair/dataset.hpp"
#include "flair/nn/basic.hpp"
#include "flair/nn/conv.hpp"

namespace flair::net {

struct FusionConfig {
  long sat_superpatch_size = 40;
  long footprint_px = 10;  // aerial patch footprint on the sat grid
  bool use_cropped = true;
  bool use_collapsed = true;
  long cropped_kernel = 1;
  // Output widths of the 3 collapsed-path layers; entries <= 0 resolve to
  // E, 2E and the stage width. A positive third entry must equal the stage
  // width it feeds.
  std::vector<long> mlp_hidden = {0, 0, 0};
  double mlp_dropout = 0.1;

  void validate() const {
    if (sat_superpatch_size < 1)
      throw validation_error("sat_superpatch_size must be positive");
    if (footprint_px < 1 || footprint_px > sat_superpatch_size)
      throw validation_error("footprint_px " + std::to_string(footprint_px) +
                             " must lie in [1, " + std::to_string(sat_superpatch_size) + "]");
    if (!use_cropped && !use_collapsed)
      throw validation_error("fusion needs the cropped module, the collapsed module, or both");
    if (cropped_kernel < 1 || cropped_kernel % 2 == 0)
      throw validation_error("cropped_kernel must be odd and positive");
    if (mlp_hidden.size() != 3)
      throw validation_error("mlp_hidden must list exactly 3 layer widths");
    if (mlp_dropout < 0.0 || mlp_dropout >= 1.0)
      throw validation_error("mlp_dropout must lie in [0, 1)");
  }
};

// Footprint crop of the temporal embedding, one conv, then bilinear resize
// to the stage geometry.
template <class T>
struct CroppedFusion {
  nn::Conv2d<T> conv;
  nn::BilinearResize<T> resize;
  long r0 = 0, c0 = 0, emb_h = 0, emb_w = 0, fp = 0;

  void init(long e_ch, long out_ch, long kernel, Rng& rng) {
    conv.init(e_ch, out_ch, kernel, 1, kernel / 2, true, rng);
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    conv.params(out, prefix + ".conv");
  }
  Tensor<T> forward(const Tensor<T>& emb, long center_r, long center_c, long footprint,
                    long out_h, long out_w) {
    emb_h = emb.shape[2];
    emb_w = emb.shape[3];
    fp = footprint;
    r0 = ds::crop_start(center_r, footprint, emb_h);
    c0 = ds::crop_start(center_c, footprint, emb_w);
    Tensor<T> crop = nn::crop2d(emb, r0, c0, footprint, footprint);
    return resize.forward(conv.forward(crop), out_h, out_w);
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = conv.backward(resize.backward(gy));
    return nn::crop2d_grad(g, r0, c0, emb_h, emb_w);
  }
};

// Spatial mean of the embedding through a 3-layer MLP, broadcast to the
// stage geometry. The result is constant over the stage's pixels.
template <class T>
struct CollapsedFusion {
  nn::Linear<T> fc1, fc2, fc3;
  nn::ReLU<T> relu1, relu2;
  nn::Dropout<T> drop1, drop2;
  long emb_h = 0, emb_w = 0;
  long out_h = 0, out_w = 0;

  void init(long e_ch, long h0, long h1, long out_ch, double dropout, Rng& rng) {
    fc1.init(e_ch, h0, rng);
    fc2.init(h0, h1, rng);
    fc3.init(h1, out_ch, rng);
    drop1.p = dropout;
    drop2.p = dropout;
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    fc1.params(out, prefix + ".fc1");
    fc2.params(out, prefix + ".fc2");
    fc3.params(out, prefix + ".fc3");
  }
  Tensor<T> forward(const Tensor<T>& emb, long oh, long ow, bool train, Rng& rng) {
    long c = emb.shape[1];
    emb_h = emb.shape[2];
    emb_w = emb.shape[3];
    long sp = emb_h * emb_w;
    out_h = oh;
    out_w = ow;
    Tensor<T> mean({1, c});
    for (long i = 0; i < c; ++i) {
      T s = 0;
      const T* src = emb.ptr() + i * sp;
      for (long p = 0; p < sp; ++p) s += src[p];
      mean.at2(0, i) = s / T(sp);
    }
    Tensor<T> h = drop1.forward(relu1.forward(fc1.forward(mean)), train, rng);
    h = drop2.forward(relu2.forward(fc2.forward(h)), train, rng);
    Tensor<T> v = fc3.forward(h);  // (1, out_ch)
    long oc = v.shape[1];
    Tensor<T> y({1, oc, oh, ow});
    for (long i = 0; i < oc; ++i) {
      T* dst = y.ptr() + i * oh * ow;
      for (long p = 0; p < oh * ow; ++p) dst[p] = v.at2(0, i);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    long oc = gy.shape[1];
    Tensor<T> gv({1, oc});
    for (long i = 0; i < oc; ++i) {
      T s = 0;
      const T* src = gy.ptr() + i * out_h * out_w;
      for (long p = 0; p < out_h * out_w; ++p) s += src[p];
      gv.at2(0, i) = s;
    }
    Tensor<T> gm = fc1.backward(relu1.backward(drop1.backward(
        fc2.backward(relu2.backward(drop2.backward(fc3.backward(gv)))))));
    // Mean backward: spread gm / sp over the embedding pixels.
    long c = gm.shape[1], sp = emb_h * emb_w;
    Tensor<T> gemb({1, c, emb_h, emb_w});
    for (long i = 0; i < c; ++i) {
      T v = gm.at2(0, i) / T(sp);
      T* dst = gemb.ptr() + i * sp;
      for (long p = 0; p < sp; ++p) dst[p] = v;
    }
    return gemb;
  }
};

// Crop the sat-grid logits to the aerial footprint and resize them onto the
// aerial grid, so the temporal branch can be scored against aerial labels.
template <class T>
struct SatLogitsToAerial {
  nn::BilinearResize<T> resize;
  long r0 = 0, c0 = 0, in_h = 0, in_w = 0;

  Tensor<T> forward(const Tensor<T>& sat_logits, long center_r, long center_c, long footprint,
                    long out_hw) {
    in_h = sat_logits.shape[2];
    in_w = sat_logits.shape[3];
    r0 = ds::crop_start(center_r, footprint, in_h);
    c0 = ds::crop_start(center_c, footprint, in_w);
    Tensor<T> crop = nn::crop2d(sat_logits, r0, c0, footprint, footprint);
    return resize.forward(crop, out_hw, out_hw);
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    return nn::crop2d_grad(resize.backward(gy), r0, c0, in_h, in_w);
  }
};

// Positional encoding of the patch centroid: 16 sinusoid values per
// coordinate, easting first.
template <class T>
Tensor<T> encode_metadata(const PatchMetadata& meta) {
  Tensor<T> out({1, 32});
  auto fill = [&](double v, long off) {
    for (long j = 0; j < 16; ++j) {
      long i = j / 2;
      double omega = std::pow(10000.0, -2.0 * double(i) / 16.0);
      double a = v * omega;
      out.at2(0, off + j) = T(j % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  };
  fill(meta.x, 0);
  fill(meta.y, 16);
  return out;
}

}  // namespace flair::net

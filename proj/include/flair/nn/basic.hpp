#pragma once

#include "flair/gemm.hpp"
#include "flair/nn/param.hpp"

namespace flair::nn {

template <class T>
struct ReLU {
  Tensor<T> y_saved;

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    for (long i = 0; i < x.numel(); ++i) y.data[size_t(i)] = x.data[size_t(i)] > 0 ? x.data[size_t(i)] : T(0);
    y_saved = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.shape);
    for (long i = 0; i < gy.numel(); ++i)
      gx.data[size_t(i)] = y_saved.data[size_t(i)] > 0 ? gy.data[size_t(i)] : T(0);
    return gx;
  }
};

// Rows-by-features linear map; accepts any leading shape collapsed to rows.
template <class T>
struct Linear {
  long in_f = 0, out_f = 0;
  bool use_bias = true;
  Param<T> w;  // (out, in)
  Param<T> b;
  Tensor<T> x_saved;

  void init(long in, long out, Rng& rng, bool bias = true) {
    in_f = in;
    out_f = out;
    use_bias = bias;
    w.resize({out, in});
    init_uniform(w, in, rng);
    if (bias) {
      b.resize({out});
      init_uniform(b, in, rng);
    }
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    if (use_bias) out.push_back({prefix + ".b", &b});
  }

  // x: (rows, in) -> (rows, out)
  Tensor<T> forward(const Tensor<T>& x) {
    long rows = x.numel() / in_f;
    x_saved = x;
    Tensor<T> y({rows, out_f});
    gemm(false, true, int(rows), int(out_f), int(in_f), T(1), x.ptr(), int(in_f), w.v.ptr(),
         int(in_f), T(0), y.ptr(), int(out_f));
    if (use_bias)
      for (long r = 0; r < rows; ++r)
        for (long c = 0; c < out_f; ++c) y.ptr()[r * out_f + c] += b.v.data[size_t(c)];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    long rows = gy.numel() / out_f;
    gemm(true, false, int(out_f), int(in_f), int(rows), T(1), gy.ptr(), int(out_f), x_saved.ptr(),
         int(in_f), T(1), w.g.ptr(), int(in_f));
    if (use_bias)
      for (long r = 0; r < rows; ++r)
        for (long c = 0; c < out_f; ++c) b.g.data[size_t(c)] += gy.ptr()[r * out_f + c];
    Tensor<T> gx(x_saved.shape);
    gemm(false, false, int(rows), int(in_f), int(out_f), T(1), gy.ptr(), int(out_f), w.v.ptr(),
         int(in_f), T(0), gx.ptr(), int(in_f));
    return gx;
  }
};

// Inverted dropout: activations scale by 1/(1-p) at train time so eval is the
// identity.
template <class T>
struct Dropout {
  double p = 0.0;
  std::vector<uint8_t> mask;

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng& rng) {
    if (!train || p <= 0.0) {
      mask.clear();
      return x;
    }
    Tensor<T> y(x.shape);
    mask.assign(size_t(x.numel()), 0);
    T scale = T(1.0 / (1.0 - p));
    for (long i = 0; i < x.numel(); ++i) {
      if (!rng.bernoulli(p)) {
        mask[size_t(i)] = 1;
        y.data[size_t(i)] = x.data[size_t(i)] * scale;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (mask.empty()) return gy;
    Tensor<T> gx(gy.shape);
    T scale = T(1.0 / (1.0 - p));
    for (long i = 0; i < gy.numel(); ++i)
      if (mask[size_t(i)]) gx.data[size_t(i)] = gy.data[size_t(i)] * scale;
    return gx;
  }
};

template <class T>
struct UpsampleNearest2x {
  std::vector<long> in_shape;

  Tensor<T> forward(const Tensor<T>& x) {
    long n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    in_shape = x.shape;
    Tensor<T> y({n, c, 2 * h, 2 * w});
    for (long i = 0; i < n * c; ++i) {
      const T* src = x.ptr() + i * h * w;
      T* dst = y.ptr() + i * 4 * h * w;
      for (long r = 0; r < 2 * h; ++r)
        for (long q = 0; q < 2 * w; ++q) dst[r * 2 * w + q] = src[(r / 2) * w + q / 2];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape);
    long h = in_shape[2], w = in_shape[3];
    for (long i = 0; i < in_shape[0] * in_shape[1]; ++i) {
      const T* src = gy.ptr() + i * 4 * h * w;
      T* dst = gx.ptr() + i * h * w;
      for (long r = 0; r < 2 * h; ++r)
        for (long q = 0; q < 2 * w; ++q) dst[(r / 2) * w + q / 2] += src[r * 2 * w + q];
    }
    return gx;
  }
};

// Bilinear resize with half-pixel centers (align_corners = false). The
// backward pass is the exact transpose of the forward weights.
template <class T>
struct BilinearResize {
  std::vector<long> in_shape;
  long out_h = 0, out_w = 0;

  struct Axis {
    long i0, i1;
    T w1;  // weight of i1; i0 gets 1-w1
  };
  std::vector<Axis> ay, ax;

  static std::vector<Axis> build_axis(long in, long out) {
    std::vector<Axis> a(static_cast<size_t>(out));
    double scale = double(in) / double(out);
    for (long o = 0; o < out; ++o) {
      double src = (double(o) + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      if (src > double(in - 1)) src = double(in - 1);
      long i0 = long(src);
      if (i0 > in - 1) i0 = in - 1;
      long i1 = std::min(i0 + 1, in - 1);
      a[size_t(o)] = {i0, i1, T(src - double(i0))};
    }
    return a;
  }

  Tensor<T> forward(const Tensor<T>& x, long ho, long wo) {
    long n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    in_shape = x.shape;
    out_h = ho;
    out_w = wo;
    ay = build_axis(h, ho);
    ax = build_axis(w, wo);
    Tensor<T> y({n, c, ho, wo});
    for (long i = 0; i < n * c; ++i) {
      const T* src = x.ptr() + i * h * w;
      T* dst = y.ptr() + i * ho * wo;
      for (long r = 0; r < ho; ++r) {
        const Axis& ry = ay[size_t(r)];
        for (long q = 0; q < wo; ++q) {
          const Axis& rx = ax[size_t(q)];
          T top = src[ry.i0 * w + rx.i0] * (T(1) - rx.w1) + src[ry.i0 * w + rx.i1] * rx.w1;
          T bot = src[ry.i1 * w + rx.i0] * (T(1) - rx.w1) + src[ry.i1 * w + rx.i1] * rx.w1;
          dst[r * wo + q] = top * (T(1) - ry.w1) + bot * ry.w1;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape);
    long h = in_shape[2], w = in_shape[3];
    for (long i = 0; i < in_shape[0] * in_shape[1]; ++i) {
      const T* src = gy.ptr() + i * out_h * out_w;
      T* dst = gx.ptr() + i * h * w;
      for (long r = 0; r < out_h; ++r) {
        const Axis& ry = ay[size_t(r)];
        for (long q = 0; q < out_w; ++q) {
          const Axis& rx = ax[size_t(q)];
          T g = src[r * out_w + q];
          dst[ry.i0 * w + rx.i0] += g * (T(1) - ry.w1) * (T(1) - rx.w1);
          dst[ry.i0 * w + rx.i1] += g * (T(1) - ry.w1) * rx.w1;
          dst[ry.i1 * w + rx.i0] += g * ry.w1 * (T(1) - rx.w1);
          dst[ry.i1 * w + rx.i1] += g * ry.w1 * rx.w1;
        }
      }
    }
    return gx;
  }
};

// Channel concatenation of two maps with matching spatial dims.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  long n = a.shape[0], ca = a.shape[1], cb = b.shape[1], h = a.shape[2], w = a.shape[3];
  if (b.shape[0] != n || b.shape[2] != h || b.shape[3] != w)
    throw data_error("concat: mismatched shapes " + a.shape_str() + " vs " + b.shape_str());
  Tensor<T> y({n, ca + cb, h, w});
  for (long i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca * h * w, ca * h * w, y.ptr() + i * (ca + cb) * h * w);
    std::copy_n(b.ptr() + i * cb * h * w, cb * h * w, y.ptr() + (i * (ca + cb) + ca) * h * w);
  }
  return y;
}

template <class T>
void split_channels_grad(const Tensor<T>& gy, long ca, Tensor<T>& ga, Tensor<T>& gb) {
  long n = gy.shape[0], c = gy.shape[1], h = gy.shape[2], w = gy.shape[3];
  long cb = c - ca;
  ga.resize({n, ca, h, w});
  gb.resize({n, cb, h, w});
  for (long i = 0; i < n; ++i) {
    std::copy_n(gy.ptr() + i * c * h * w, ca * h * w, ga.ptr() + i * ca * h * w);
    std::copy_n(gy.ptr() + (i * c + ca) * h * w, cb * h * w, gb.ptr() + i * cb * h * w);
  }
}

// Crops rows [r0, r0+h) and cols [c0, c0+w).
template <class T>
Tensor<T> crop2d(const Tensor<T>& x, long r0, long c0, long h, long w) {
  long n = x.shape[0], c = x.shape[1], ih = x.shape[2], iw = x.shape[3];
  if (r0 < 0 || c0 < 0 || r0 + h > ih || c0 + w > iw)
    throw data_error("crop [" + std::to_string(r0) + "," + std::to_string(r0 + h) + ")x[" +
                     std::to_string(c0) + "," + std::to_string(c0 + w) + ") exceeds " +
                     x.shape_str());
  Tensor<T> y({n, c, h, w});
  for (long i = 0; i < n * c; ++i)
    for (long r = 0; r < h; ++r)
      std::copy_n(x.ptr() + i * ih * iw + (r0 + r) * iw + c0, w, y.ptr() + i * h * w + r * w);
  return y;
}

// Adjoint of crop2d: embeds the gradient back at (r0, c0) in a zero field.
template <class T>
Tensor<T> crop2d_grad(const Tensor<T>& gy, long r0, long c0, long ih, long iw) {
  long n = gy.shape[0], c = gy.shape[1], h = gy.shape[2], w = gy.shape[3];
  Tensor<T> gx({n, c, ih, iw});
  for (long i = 0; i < n * c; ++i)
    for (long r = 0; r < h; ++r)
      std::copy_n(gy.ptr() + i * h * w + r * w, w, gx.ptr() + i * ih * iw + (r0 + r) * iw + c0);
  return gx;
}

}  // namespace flair::nn

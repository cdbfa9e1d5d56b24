#pragma once

#include "flair/gemm.hpp"
#include "flair/nn/param.hpp"

namespace flair::nn {

inline long conv_out_dim(long in, long k, long stride, long pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// col layout: (C*k*k) rows by (Ho*Wo) columns, row-major.
template <class T>
void im2col(const T* x, long c_in, long h, long w, long k, long stride, long pad, T* col) {
  long ho = conv_out_dim(h, k, stride, pad);
  long wo = conv_out_dim(w, k, stride, pad);
  for (long c = 0; c < c_in; ++c) {
    for (long ki = 0; ki < k; ++ki) {
      for (long kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * ho * wo;
        for (long oh = 0; oh < ho; ++oh) {
          long ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) {
            for (long ow = 0; ow < wo; ++ow) dst[oh * wo + ow] = T(0);
            continue;
          }
          const T* row = x + (c * h + ih) * w;
          for (long ow = 0; ow < wo; ++ow) {
            long iw = ow * stride - pad + kj;
            dst[oh * wo + ow] = (iw < 0 || iw >= w) ? T(0) : row[iw];
          }
        }
      }
    }
  }
}

// Scatter-adds col back onto the image grid; x must be pre-zeroed by the
// caller when accumulation is not wanted.
template <class T>
void col2im(const T* col, long c_in, long h, long w, long k, long stride, long pad, T* x) {
  long ho = conv_out_dim(h, k, stride, pad);
  long wo = conv_out_dim(w, k, stride, pad);
  for (long c = 0; c < c_in; ++c) {
    for (long ki = 0; ki < k; ++ki) {
      for (long kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * ho * wo;
        for (long oh = 0; oh < ho; ++oh) {
          long ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          T* row = x + (c * h + ih) * w;
          for (long ow = 0; ow < wo; ++ow) {
            long iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) row[iw] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

template <class T>
struct Conv2d {
  long in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  bool use_bias = true;
  Param<T> w;  // (out, in, k, k)
  Param<T> b;  // (out)
  Tensor<T> x_saved;
  Tensor<T> col;  // scratch, reused across calls

  void init(long in, long out, long kk, long s, long p, bool bias, Rng& rng) {
    in_ch = in;
    out_ch = out;
    k = kk;
    stride = s;
    pad = p;
    use_bias = bias;
    w.resize({out, in, k, k});
    init_he(w, in * k * k, rng);
    if (use_bias) b.resize({out});
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    if (use_bias) out.push_back({prefix + ".b", &b});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    long n = x.shape[0], h = x.shape[2], wd = x.shape[3];
    if (x.shape[1] != in_ch)
      throw data_error("conv expects " + std::to_string(in_ch) + " channels, got " + x.shape_str());
    long ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wd, k, stride, pad);
    x_saved = x;
    col.resize({in_ch * k * k, ho * wo});
    Tensor<T> y({n, out_ch, ho, wo});
    for (long i = 0; i < n; ++i) {
      im2col(x.ptr() + i * in_ch * h * wd, in_ch, h, wd, k, stride, pad, col.ptr());
      gemm(false, false, int(out_ch), int(ho * wo), int(in_ch * k * k), T(1), w.v.ptr(),
           int(in_ch * k * k), col.ptr(), int(ho * wo), T(0), y.ptr() + i * out_ch * ho * wo,
           int(ho * wo));
    }
    if (use_bias)
      for (long i = 0; i < n; ++i)
        for (long c = 0; c < out_ch; ++c) {
          T* dst = y.ptr() + (i * out_ch + c) * ho * wo;
          for (long p = 0; p < ho * wo; ++p) dst[p] += b.v.data[size_t(c)];
        }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    long n = x_saved.shape[0], h = x_saved.shape[2], wd = x_saved.shape[3];
    long ho = gy.shape[2], wo = gy.shape[3];
    Tensor<T> gx({n, in_ch, h, wd});
    Tensor<T> gcol({in_ch * k * k, ho * wo});
    for (long i = 0; i < n; ++i) {
      const T* gy_i = gy.ptr() + i * out_ch * ho * wo;
      // Recompute the column matrix instead of caching one per sample.
      im2col(x_saved.ptr() + i * in_ch * h * wd, in_ch, h, wd, k, stride, pad, col.ptr());
      gemm(false, true, int(out_ch), int(in_ch * k * k), int(ho * wo), T(1), gy_i, int(ho * wo),
           col.ptr(), int(ho * wo), T(1), w.g.ptr(), int(in_ch * k * k));
      gemm(true, false, int(in_ch * k * k), int(ho * wo), int(out_ch), T(1), w.v.ptr(),
           int(in_ch * k * k), gy_i, int(ho * wo), T(0), gcol.ptr(), int(ho * wo));
      col2im(gcol.ptr(), in_ch, h, wd, k, stride, pad, gx.ptr() + i * in_ch * h * wd);
    }
    if (use_bias)
      for (long i = 0; i < n; ++i)
        for (long c = 0; c < out_ch; ++c) {
          const T* src = gy.ptr() + (i * out_ch + c) * ho * wo;
          T s = 0;
          for (long p = 0; p < ho * wo; ++p) s += src[p];
          b.g.data[size_t(c)] += s;
        }
    return gx;
  }
};

// Transposed convolution, weight layout (in, out, k, k). Output size is
// (H-1)*stride - 2*pad + k.
template <class T>
struct ConvTranspose2d {
  long in_ch = 0, out_ch = 0, k = 2, stride = 2, pad = 0;
  bool use_bias = true;
  Param<T> w;
  Param<T> b;
  Tensor<T> x_saved;
  Tensor<T> col;

  void init(long in, long out, long kk, long s, long p, bool bias, Rng& rng) {
    in_ch = in;
    out_ch = out;
    k = kk;
    stride = s;
    pad = p;
    use_bias = bias;
    w.resize({in, out, k, k});
    init_he(w, in * k * k, rng);
    if (use_bias) b.resize({out});
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    if (use_bias) out.push_back({prefix + ".b", &b});
  }

  long out_dim(long in) const { return (in - 1) * stride - 2 * pad + k; }

  Tensor<T> forward(const Tensor<T>& x) {
    long n = x.shape[0], h = x.shape[2], wd = x.shape[3];
    long ho = out_dim(h), wo = out_dim(wd);
    x_saved = x;
    Tensor<T> y({n, out_ch, ho, wo});
    col.resize({out_ch * k * k, h * wd});
    for (long i = 0; i < n; ++i) {
      // col = W^T x, then scatter back through the conv geometry that maps
      // the output grid down to the input grid.
      gemm(true, false, int(out_ch * k * k), int(h * wd), int(in_ch), T(1), w.v.ptr(),
           int(out_ch * k * k), x.ptr() + i * in_ch * h * wd, int(h * wd), T(0), col.ptr(),
           int(h * wd));
      col2im(col.ptr(), out_ch, ho, wo, k, stride, pad, y.ptr() + i * out_ch * ho * wo);
    }
    if (use_bias)
      for (long i = 0; i < n; ++i)
        for (long c = 0; c < out_ch; ++c) {
          T* dst = y.ptr() + (i * out_ch + c) * ho * wo;
          for (long p = 0; p < ho * wo; ++p) dst[p] += b.v.data[size_t(c)];
        }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    long n = x_saved.shape[0], h = x_saved.shape[2], wd = x_saved.shape[3];
    long ho = gy.shape[2], wo = gy.shape[3];
    Tensor<T> gx({n, in_ch, h, wd});
    for (long i = 0; i < n; ++i) {
      const T* gy_i = gy.ptr() + i * out_ch * ho * wo;
      im2col(gy_i, out_ch, ho, wo, k, stride, pad, col.ptr());
      // gW += x col^T ; gx = W col.
      gemm(false, true, int(in_ch), int(out_ch * k * k), int(h * wd), T(1),
           x_saved.ptr() + i * in_ch * h * wd, int(h * wd), col.ptr(), int(h * wd), T(1),
           w.g.ptr(), int(out_ch * k * k));
      gemm(false, false, int(in_ch), int(h * wd), int(out_ch * k * k), T(1), w.v.ptr(),
           int(out_ch * k * k), col.ptr(), int(h * wd), T(0), gx.ptr() + i * in_ch * h * wd,
           int(h * wd));
    }
    if (use_bias)
      for (long i = 0; i < n; ++i)
        for (long c = 0; c < out_ch; ++c) {
          const T* src = gy.ptr() + (i * out_ch + c) * ho * wo;
          T s = 0;
          for (long p = 0; p < ho * wo; ++p) s += src[p];
          b.g.data[size_t(c)] += s;
        }
    return gx;
  }
};

// 3x3 stride-2 max pooling with padding 1 (the classic stem pool). Ties keep
// the first maximum so backward routing is unambiguous.
template <class T>
struct MaxPool2d {
  long k = 3, stride = 2, pad = 1;
  std::vector<long> argmax;
  std::vector<long> in_shape;

  Tensor<T> forward(const Tensor<T>& x) {
    long n = x.shape[0], c_in = x.shape[1], h = x.shape[2], w = x.shape[3];
    long ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(w, k, stride, pad);
    in_shape = x.shape;
    Tensor<T> y({n, c_in, ho, wo});
    argmax.assign(size_t(y.numel()), 0);
    for (long i = 0; i < n * c_in; ++i) {
      const T* src = x.ptr() + i * h * w;
      T* dst = y.ptr() + i * ho * wo;
      long* arg = argmax.data() + i * ho * wo;
      for (long oh = 0; oh < ho; ++oh) {
        for (long ow = 0; ow < wo; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          long best_at = -1;
          for (long ki = 0; ki < k; ++ki) {
            long ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= h) continue;
            for (long kj = 0; kj < k; ++kj) {
              long iw = ow * stride - pad + kj;
              if (iw < 0 || iw >= w) continue;
              if (src[ih * w + iw] > best) {
                best = src[ih * w + iw];
                best_at = ih * w + iw;
              }
            }
          }
          dst[oh * wo + ow] = best;
          arg[oh * wo + ow] = best_at;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape);
    long hw = in_shape[2] * in_shape[3];
    long ohw = gy.shape[2] * gy.shape[3];
    for (long i = 0; i < gy.shape[0] * gy.shape[1]; ++i)
      for (long p = 0; p < ohw; ++p)
        gx.ptr()[i * hw + argmax[size_t(i * ohw + p)]] += gy.ptr()[i * ohw + p];
    return gx;
  }
};

}  // namespace flair::nn

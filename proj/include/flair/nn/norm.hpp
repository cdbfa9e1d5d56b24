#pragma once

#include "flair/nn/param.hpp"

namespace flair::nn {

template <class T>
struct BatchNorm2d {
  long ch = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Param<T> gamma, beta;
  Tensor<T> running_mean, running_var;

  // Saved by forward for the train-mode backward.
  Tensor<T> x_saved;
  std::vector<T> mean_b, var_b;
  bool saved_train = false;

  void init(long c) {
    ch = c;
    gamma.resize({c});
    gamma.v.fill(T(1));
    beta.resize({c});
    running_mean.resize({c});
    running_var.resize({c});
    running_var.fill(T(1));
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    long n = x.shape[0], h = x.shape[2], w = x.shape[3];
    long cnt = n * h * w;
    x_saved = x;
    saved_train = train;
    Tensor<T> y(x.shape);
    mean_b.assign(size_t(ch), T(0));
    var_b.assign(size_t(ch), T(0));
    for (long c = 0; c < ch; ++c) {
      T mu, var;
      if (train) {
        T s = 0, s2 = 0;
        for (long i = 0; i < n; ++i) {
          const T* src = x.ptr() + (i * ch + c) * h * w;
          for (long p = 0; p < h * w; ++p) {
            s += src[p];
            s2 += src[p] * src[p];
          }
        }
        mu = s / T(cnt);
        var = s2 / T(cnt) - mu * mu;  // biased, used for normalization
        if (var < 0) var = 0;
        mean_b[size_t(c)] = mu;
        var_b[size_t(c)] = var;
        T unbiased = cnt > 1 ? var * T(cnt) / T(cnt - 1) : var;
        running_mean.data[size_t(c)] =
            T((1 - momentum) * running_mean.data[size_t(c)] + momentum * mu);
        running_var.data[size_t(c)] =
            T((1 - momentum) * running_var.data[size_t(c)] + momentum * unbiased);
      } else {
        mu = running_mean.data[size_t(c)];
        var = running_var.data[size_t(c)];
      }
      T inv = T(1) / std::sqrt(var + T(eps));
      T g = gamma.v.data[size_t(c)], bt = beta.v.data[size_t(c)];
      for (long i = 0; i < n; ++i) {
        const T* src = x.ptr() + (i * ch + c) * h * w;
        T* dst = y.ptr() + (i * ch + c) * h * w;
        for (long p = 0; p < h * w; ++p) dst[p] = g * (src[p] - mu) * inv + bt;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    long n = gy.shape[0], h = gy.shape[2], w = gy.shape[3];
    long cnt = n * h * w;
    Tensor<T> gx(gy.shape);
    for (long c = 0; c < ch; ++c) {
      T mu = saved_train ? mean_b[size_t(c)] : running_mean.data[size_t(c)];
      T var = saved_train ? var_b[size_t(c)] : running_var.data[size_t(c)];
      T inv = T(1) / std::sqrt(var + T(eps));
      T g = gamma.v.data[size_t(c)];

      T sum_gy = 0, sum_gy_xhat = 0;
      for (long i = 0; i < n; ++i) {
        const T* gsrc = gy.ptr() + (i * ch + c) * h * w;
        const T* xsrc = x_saved.ptr() + (i * ch + c) * h * w;
        for (long p = 0; p < h * w; ++p) {
          T xhat = (xsrc[p] - mu) * inv;
          sum_gy += gsrc[p];
          sum_gy_xhat += gsrc[p] * xhat;
        }
      }
      gamma.g.data[size_t(c)] += sum_gy_xhat;
      beta.g.data[size_t(c)] += sum_gy;

      if (saved_train) {
        // Batch statistics take part in the graph.
        T m_gy = sum_gy / T(cnt), m_gyx = sum_gy_xhat / T(cnt);
        for (long i = 0; i < n; ++i) {
          const T* gsrc = gy.ptr() + (i * ch + c) * h * w;
          const T* xsrc = x_saved.ptr() + (i * ch + c) * h * w;
          T* dst = gx.ptr() + (i * ch + c) * h * w;
          for (long p = 0; p < h * w; ++p) {
            T xhat = (xsrc[p] - mu) * inv;
            dst[p] = g * inv * (gsrc[p] - m_gy - xhat * m_gyx);
          }
        }
      } else {
        for (long i = 0; i < n; ++i) {
          const T* gsrc = gy.ptr() + (i * ch + c) * h * w;
          T* dst = gx.ptr() + (i * ch + c) * h * w;
          for (long p = 0; p < h * w; ++p) dst[p] = g * inv * gsrc[p];
        }
      }
    }
    return gx;
  }
};

// GroupNorm over (C/G, H, W) per sample; statistics never cross the batch, so
// train and eval behave identically.
template <class T>
struct GroupNorm {
  long ch = 0, groups = 1;
  double eps = 1e-5;
  Param<T> gamma, beta;
  Tensor<T> x_saved;
  std::vector<T> mean_s, var_s;  // per (n, group)

  void init(long c, long g) {
    if (c % g != 0)
      throw data_error("group norm: " + std::to_string(c) + " channels not divisible by " +
                       std::to_string(g) + " groups");
    ch = c;
    groups = g;
    gamma.resize({c});
    gamma.v.fill(T(1));
    beta.resize({c});
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }

  Tensor<T> forward(const Tensor<T>& x, bool) {
    long n = x.shape[0], h = x.shape[2], w = x.shape[3];
    long per = ch / groups, cnt = per * h * w;
    x_saved = x;
    mean_s.assign(size_t(n * groups), T(0));
    var_s.assign(size_t(n * groups), T(0));
    Tensor<T> y(x.shape);
    for (long i = 0; i < n; ++i) {
      for (long g = 0; g < groups; ++g) {
        const T* base = x.ptr() + (i * ch + g * per) * h * w;
        T s = 0, s2 = 0;
        for (long p = 0; p < cnt; ++p) {
          s += base[p];
          s2 += base[p] * base[p];
        }
        T mu = s / T(cnt);
        T var = s2 / T(cnt) - mu * mu;
        if (var < 0) var = 0;
        mean_s[size_t(i * groups + g)] = mu;
        var_s[size_t(i * groups + g)] = var;
        T inv = T(1) / std::sqrt(var + T(eps));
        for (long c = 0; c < per; ++c) {
          T gm = gamma.v.data[size_t(g * per + c)], bt = beta.v.data[size_t(g * per + c)];
          const T* src = base + c * h * w;
          T* dst = y.ptr() + (i * ch + g * per + c) * h * w;
          for (long p = 0; p < h * w; ++p) dst[p] = gm * (src[p] - mu) * inv + bt;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    long n = gy.shape[0], h = gy.shape[2], w = gy.shape[3];
    long per = ch / groups, cnt = per * h * w;
    Tensor<T> gx(gy.shape);
    for (long i = 0; i < n; ++i) {
      for (long g = 0; g < groups; ++g) {
        T mu = mean_s[size_t(i * groups + g)];
        T inv = T(1) / std::sqrt(var_s[size_t(i * groups + g)] + T(eps));
        const T* xbase = x_saved.ptr() + (i * ch + g * per) * h * w;
        const T* gbase = gy.ptr() + (i * ch + g * per) * h * w;

        T sum_t = 0, sum_tx = 0;  // sums of gamma-scaled grads over the group
        for (long c = 0; c < per; ++c) {
          T gm = gamma.v.data[size_t(g * per + c)];
          const T* xs = xbase + c * h * w;
          const T* gs = gbase + c * h * w;
          T sg = 0, sgx = 0;
          for (long p = 0; p < h * w; ++p) {
            T xhat = (xs[p] - mu) * inv;
            sg += gs[p];
            sgx += gs[p] * xhat;
          }
          gamma.g.data[size_t(g * per + c)] += sgx;
          beta.g.data[size_t(g * per + c)] += sg;
          sum_t += gm * sg;
          sum_tx += gm * sgx;
        }
        T m_t = sum_t / T(cnt), m_tx = sum_tx / T(cnt);
        for (long c = 0; c < per; ++c) {
          T gm = gamma.v.data[size_t(g * per + c)];
          const T* xs = xbase + c * h * w;
          const T* gs = gbase + c * h * w;
          T* dst = gx.ptr() + (i * ch + g * per + c) * h * w;
          for (long p = 0; p < h * w; ++p) {
            T xhat = (xs[p] - mu) * inv;
            dst[p] = inv * (gm * gs[p] - m_t - xhat * m_tx);
          }
        }
      }
    }
    return gx;
  }
};

}  // namespace flair::nn

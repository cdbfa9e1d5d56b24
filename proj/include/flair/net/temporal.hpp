#pragma once

#include <cmath>

#include "flair/data_model.hpp"
#include "flair/nn/basic.hpp"
#include "flair/nn/conv.hpp"
#include "flair/nn/norm.hpp"

namespace flair::net {

struct TemporalConfig {
  std::vector<long> encoder_widths = {32, 32, 64, 128};
  std::vector<long> decoder_widths = {32, 32, 64, 128};
  long n_heads = 4;
  long d_k = 4;
  long n_classes = kNumClasses;

  long embedding_channels() const { return decoder_widths.empty() ? 0 : decoder_widths[0]; }

  void validate() const {
    if (encoder_widths.size() < 2)
      throw validation_error("temporal encoder needs at least 2 levels");
    if (encoder_widths.size() != decoder_widths.size())
      throw validation_error("temporal encoder has " + std::to_string(encoder_widths.size()) +
                             " levels but decoder has " + std::to_string(decoder_widths.size()));
    if (encoder_widths.back() != decoder_widths.back())
      throw validation_error("deepest decoder width " + std::to_string(decoder_widths.back()) +
                             " must match deepest encoder width " +
                             std::to_string(encoder_widths.back()));
    if (n_heads < 1 || d_k < 1) throw validation_error("attention needs n_heads >= 1, d_k >= 1");
    for (long w : encoder_widths)
      if (w % n_heads != 0)
        throw validation_error("encoder width " + std::to_string(w) +
                               " not divisible by n_heads " + std::to_string(n_heads));
    if (n_classes < 2) throw validation_error("temporal branch needs at least 2 classes");
  }
};

namespace detail {

// Largest of {4, 2, 1} dividing c; group norm keeps per-date statistics
// independent, which is what makes the branch date-permutation invariant.
inline long gn_groups(long c) { return c % 4 == 0 ? 4 : (c % 2 == 0 ? 2 : 1); }

template <class T>
struct ConvGN {
  nn::Conv2d<T> conv;
  nn::GroupNorm<T> gn;
  nn::ReLU<T> relu;

  void init(long in, long out, long k, long s, long p, Rng& rng) {
    conv.init(in, out, k, s, p, false, rng);
    gn.init(out, gn_groups(out));
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    conv.params(out, prefix + ".conv");
    gn.params(out, prefix + ".gn");
  }
  Tensor<T> forward(const Tensor<T>& x) { return relu.forward(gn.forward(conv.forward(x), true)); }
  Tensor<T> backward(const Tensor<T>& gy) {
    return conv.backward(gn.backward(relu.backward(gy)));
  }
};

template <class T>
struct ConvTGN {
  nn::ConvTranspose2d<T> conv;
  nn::GroupNorm<T> gn;
  nn::ReLU<T> relu;

  void init(long in, long out, Rng& rng) {
    conv.init(in, out, 4, 2, 1, false, rng);
    gn.init(out, gn_groups(out));
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    conv.params(out, prefix + ".conv");
    gn.params(out, prefix + ".gn");
  }
  Tensor<T> forward(const Tensor<T>& x) { return relu.forward(gn.forward(conv.forward(x), true)); }
  Tensor<T> backward(const Tensor<T>& gy) {
    return conv.backward(gn.backward(relu.backward(gy)));
  }
};

// (1, C, h, w) <-> (h*w, C) so channel vectors become matrix rows.
template <class T>
Tensor<T> chw_to_rows(const Tensor<T>& x) {
  long c = x.shape[1], hw = x.shape[2] * x.shape[3];
  Tensor<T> y({hw, c});
  for (long i = 0; i < c; ++i)
    for (long p = 0; p < hw; ++p) y.at2(p, i) = x.data[size_t(i * hw + p)];
  return y;
}
template <class T>
Tensor<T> rows_to_chw(const Tensor<T>& x, long h, long w) {
  long c = x.shape[1];
  Tensor<T> y({1, c, h, w});
  for (long i = 0; i < c; ++i)
    for (long p = 0; p < h * w; ++p) y.data[size_t(i * h * w + p)] = x.at2(p, i);
  return y;
}

}  // namespace detail

// Sinusoidal encoding of a day-of-year, `dim` values. Even slots are sines,
// odd slots cosines, with the usual geometric frequency ladder.
inline std::vector<double> day_position_encoding(int day_of_year, long dim) {
  std::vector<double> pe(static_cast<size_t>(dim));
  for (long j = 0; j < dim; ++j) {
    long i = j / 2;
    double omega = std::pow(10000.0, -2.0 * double(i) / double(dim));
    double a = double(day_of_year) * omega;
    pe[size_t(j)] = (j % 2 == 0) ? std::sin(a) : std::cos(a);
  }
  return pe;
}

// Temporal collapse: per head, the attention weights mix the dates of the
// head's channel group. f is (T, C, h, w), a is (H, T, h, w); returns (1, C, h, w).
template <class T>
Tensor<T> att_collapse(const Tensor<T>& f, const Tensor<T>& a) {
  long td = f.shape[0], c = f.shape[1], h = f.shape[2], w = f.shape[3];
  long heads = a.shape[0], hw = h * w, cg = c / heads;
  Tensor<T> out({1, c, h, w});
  out.zero();
  for (long g = 0; g < heads; ++g)
    for (long t = 0; t < td; ++t) {
      const T* ap = a.ptr() + (g * td + t) * hw;
      for (long cc = g * cg; cc < (g + 1) * cg; ++cc) {
        const T* fp = f.ptr() + (t * c + cc) * hw;
        T* op = out.ptr() + cc * hw;
        for (long p = 0; p < hw; ++p) op[p] += ap[p] * fp[p];
      }
    }
  return out;
}

template <class T>
void att_collapse_grad(const Tensor<T>& f, const Tensor<T>& a, const Tensor<T>& gout,
                       Tensor<T>& gf, Tensor<T>& ga) {
  long td = f.shape[0], c = f.shape[1], h = f.shape[2], w = f.shape[3];
  long heads = a.shape[0], hw = h * w, cg = c / heads;
  if (gf.empty()) { gf.resize(f.shape); gf.zero(); }
  if (ga.empty()) { ga.resize(a.shape); ga.zero(); }
  for (long g = 0; g < heads; ++g)
    for (long t = 0; t < td; ++t) {
      const T* ap = a.ptr() + (g * td + t) * hw;
      T* gap = ga.ptr() + (g * td + t) * hw;
      for (long cc = g * cg; cc < (g + 1) * cg; ++cc) {
        const T* fp = f.ptr() + (t * c + cc) * hw;
        T* gfp = gf.ptr() + (t * c + cc) * hw;
        const T* gop = gout.ptr() + cc * hw;
        for (long p = 0; p < hw; ++p) {
          gfp[p] += ap[p] * gop[p];
          gap[p] += fp[p] * gop[p];
        }
      }
    }
}

// Lightweight temporal attention encoder. One learned query per head attends
// over the dates of every lowest-resolution pixel; values are the input
// channel groups. Returns the collapsed map and keeps the attention weights
// for reuse at the other levels.
template <class T>
struct LTAE {
  long d_model = 0, n_heads = 0, d_k = 0;
  nn::Param<T> query;  // (H, d_k)
  nn::Linear<T> k_fc;  // d_model -> H * d_k
  nn::Linear<T> out_fc;
  nn::GroupNorm<T> out_gn;
  nn::ReLU<T> out_relu;

  Tensor<T> xe;    // (T, C, h, w) input plus date encoding
  Tensor<T> kmat;  // (T*h*w, H*d_k)
  Tensor<T> attn;  // (H, T, h, w)
  long hs = 0, ws = 0;

  void init(long dm, long heads, long dk, Rng& rng) {
    d_model = dm;
    n_heads = heads;
    d_k = dk;
    query.resize({heads, dk});
    nn::init_uniform(query, dk, rng);
    k_fc.init(dm, heads * dk, rng);
    out_fc.init(dm, dm, rng);
    out_gn.init(dm, detail::gn_groups(dm));
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".query", &query});
    k_fc.params(out, prefix + ".k_fc");
    out_fc.params(out, prefix + ".out_fc");
    out_gn.params(out, prefix + ".out_gn");
  }

  Tensor<T> forward(const Tensor<T>& x, const std::vector<int>& dates) {
    long td = x.shape[0], c = x.shape[1];
    hs = x.shape[2];
    ws = x.shape[3];
    long hw = hs * ws;

    xe = x;
    long d_pe = d_model / n_heads;
    for (long t = 0; t < td; ++t) {
      std::vector<double> pe = day_position_encoding(dates[size_t(t)], d_pe);
      for (long cc = 0; cc < c; ++cc) {
        T v = T(pe[size_t(cc % d_pe)]);
        T* dst = xe.ptr() + (t * c + cc) * hw;
        for (long p = 0; p < hw; ++p) dst[p] += v;
      }
    }

    // Keys for every (date, pixel) row.
    Tensor<T> rows({td * hw, c});
    for (long t = 0; t < td; ++t)
      for (long cc = 0; cc < c; ++cc) {
        const T* src = xe.ptr() + (t * c + cc) * hw;
        for (long p = 0; p < hw; ++p) rows.at2(t * hw + p, cc) = src[p];
      }
    kmat = k_fc.forward(rows);

    // Scaled dot with the master queries, then softmax over dates.
    attn.resize({n_heads, td, hs, ws});
    T scale = T(1) / T(std::sqrt(double(d_k)));
    for (long g = 0; g < n_heads; ++g)
      for (long t = 0; t < td; ++t)
        for (long p = 0; p < hw; ++p) {
          T dot = 0;
          const T* kp = kmat.ptr() + (t * hw + p) * (n_heads * d_k) + g * d_k;
          const T* qp = query.v.ptr() + g * d_k;
          for (long j = 0; j < d_k; ++j) dot += kp[j] * qp[j];
          attn.data[size_t((g * td + t) * hw + p)] = dot * scale;
        }
    for (long g = 0; g < n_heads; ++g)
      for (long p = 0; p < hw; ++p) {
        T mx = attn.data[size_t(g * td * hw + p)];
        for (long t = 1; t < td; ++t) mx = std::max(mx, attn.data[size_t((g * td + t) * hw + p)]);
        T sum = 0;
        for (long t = 0; t < td; ++t) {
          T& v = attn.data[size_t((g * td + t) * hw + p)];
          v = std::exp(v - mx);
          sum += v;
        }
        for (long t = 0; t < td; ++t) attn.data[size_t((g * td + t) * hw + p)] /= sum;
      }

    Tensor<T> collapsed = att_collapse(xe, attn);
    Tensor<T> o = out_fc.forward(detail::chw_to_rows(collapsed));
    return out_relu.forward(out_gn.forward(detail::rows_to_chw(o, hs, ws), true));
  }

  // gattn_ext carries attention gradients accumulated at the other levels;
  // pass an empty tensor when there are none. Returns grad wrt the raw input.
  Tensor<T> backward(const Tensor<T>& gy, const Tensor<T>& gattn_ext) {
    long td = xe.shape[0], c = xe.shape[1], hw = hs * ws;

    Tensor<T> g = out_gn.backward(out_relu.backward(gy));
    Tensor<T> gcollapsed = detail::rows_to_chw(out_fc.backward(detail::chw_to_rows(g)), hs, ws);

    Tensor<T> gxe, gattn;
    att_collapse_grad(xe, attn, gcollapsed, gxe, gattn);
    if (!gattn_ext.empty())
      for (long i = 0; i < gattn.numel(); ++i) gattn.data[size_t(i)] += gattn_ext.data[size_t(i)];

    // Softmax backward per (head, pixel) column.
    Tensor<T> glogit({n_heads, td, hs, ws});
    for (long g2 = 0; g2 < n_heads; ++g2)
      for (long p = 0; p < hw; ++p) {
        T dot = 0;
        for (long t = 0; t < td; ++t) {
          size_t i = size_t((g2 * td + t) * hw + p);
          dot += attn.data[i] * gattn.data[i];
        }
        for (long t = 0; t < td; ++t) {
          size_t i = size_t((g2 * td + t) * hw + p);
          glogit.data[i] = attn.data[i] * (gattn.data[i] - dot);
        }
      }

    Tensor<T> gk({td * hw, n_heads * d_k});
    gk.zero();
    T scale = T(1) / T(std::sqrt(double(d_k)));
    for (long g2 = 0; g2 < n_heads; ++g2)
      for (long t = 0; t < td; ++t)
        for (long p = 0; p < hw; ++p) {
          T gl = glogit.data[size_t((g2 * td + t) * hw + p)] * scale;
          const T* kp = kmat.ptr() + (t * hw + p) * (n_heads * d_k) + g2 * d_k;
          T* gkp = gk.ptr() + (t * hw + p) * (n_heads * d_k) + g2 * d_k;
          const T* qp = query.v.ptr() + g2 * d_k;
          T* gqp = query.g.ptr() + g2 * d_k;
          for (long j = 0; j < d_k; ++j) {
            gkp[j] += gl * qp[j];
            gqp[j] += gl * kp[j];
          }
        }

    Tensor<T> grows = k_fc.backward(gk);
    for (long t = 0; t < td; ++t)
      for (long cc = 0; cc < c; ++cc) {
        T* dst = gxe.ptr() + (t * c + cc) * hw;
        for (long p = 0; p < hw; ++p) dst[p] += grows.at2(t * hw + p, cc);
      }
    return gxe;  // the date encoding is an additive constant
  }
};

// Temporal branch over one super-patch series. Dates act as the batch of a
// shared convolutional encoder; the attention collapses them, and a decoder
// brings the collapsed maps back to the input resolution.
template <class T>
struct TemporalBranch {
  TemporalConfig cfg;
  std::vector<detail::ConvGN<T>> enc_a, enc_b;  // per level: downsample + refine
  LTAE<T> ltae;
  std::vector<detail::ConvTGN<T>> ups;
  std::vector<detail::ConvGN<T>> dec_conv;
  detail::ConvGN<T> sat_pre;
  nn::Conv2d<T> sat_out;

  std::vector<Tensor<T>> feats;    // per level (T, e, h, w)
  std::vector<Tensor<T>> attn_up;  // per level below the deepest
  std::vector<nn::BilinearResize<T>> attn_rs;
  std::vector<Tensor<T>> gf_skip;
  std::vector<long> lvl_h, lvl_w;
  Tensor<T> embedding_saved;

  void init(const TemporalConfig& c, Rng& rng) {
    cfg = c;
    cfg.validate();
    long levels = long(cfg.encoder_widths.size());
    enc_a.resize(size_t(levels));
    enc_b.resize(size_t(levels));
    for (long l = 0; l < levels; ++l) {
      long in = l == 0 ? kSenBands : cfg.encoder_widths[size_t(l - 1)];
      long out = cfg.encoder_widths[size_t(l)];
      enc_a[size_t(l)].init(in, out, 3, l == 0 ? 1 : 2, 1, rng);
      enc_b[size_t(l)].init(out, out, 3, 1, 1, rng);
    }
    ltae.init(cfg.encoder_widths.back(), cfg.n_heads, cfg.d_k, rng);
    ups.resize(size_t(levels - 1));
    dec_conv.resize(size_t(levels - 1));
    for (long i = 0; i < levels - 1; ++i) {
      long tgt = levels - 2 - i;
      long din = cfg.decoder_widths[size_t(tgt + 1)];
      long dout = cfg.decoder_widths[size_t(tgt)];
      ups[size_t(i)].init(din, dout, rng);
      dec_conv[size_t(i)].init(dout + cfg.encoder_widths[size_t(tgt)], dout, 3, 1, 1, rng);
    }
    long e = cfg.embedding_channels();
    sat_pre.init(e, e, 3, 1, 1, rng);
    sat_out.init(e, cfg.n_classes, 1, 1, 0, true, rng);
  }

  void params(nn::ParamList<T>& out, const std::string& prefix) {
    for (size_t l = 0; l < enc_a.size(); ++l) {
      enc_a[l].params(out, prefix + ".enc" + std::to_string(l) + "a");
      enc_b[l].params(out, prefix + ".enc" + std::to_string(l) + "b");
    }
    ltae.params(out, prefix + ".ltae");
    for (size_t i = 0; i < ups.size(); ++i) {
      ups[i].params(out, prefix + ".up" + std::to_string(i));
      dec_conv[i].params(out, prefix + ".dec" + std::to_string(i));
    }
    sat_pre.params(out, prefix + ".sat_pre");
    sat_out.params(out, prefix + ".sat_out");
  }

  struct Out {
    Tensor<T> sat_logits;  // (1, n_classes, S, S)
    Tensor<T> embedding;   // (1, E, S, S)
  };

  // x: (T, bands, S, S), already normalized; dates: day-of-year per frame.
  Out forward(const Tensor<T>& x, const std::vector<int>& dates) {
    if (x.shape.size() != 4 || x.shape[1] != kSenBands)
      throw data_error("temporal input must be (T, " + std::to_string(kSenBands) +
                       ", S, S), got " + x.shape_str());
    long td = x.shape[0];
    if (td < 1) throw data_error("temporal branch needs at least one date");
    if (long(dates.size()) != td)
      throw data_error("got " + std::to_string(dates.size()) + " dates for " +
                       std::to_string(td) + " frames");

    long levels = long(cfg.encoder_widths.size());
    feats.assign(size_t(levels), {});
    lvl_h.assign(size_t(levels), 0);
    lvl_w.assign(size_t(levels), 0);
    Tensor<T> cur = x;
    for (long l = 0; l < levels; ++l) {
      cur = enc_b[size_t(l)].forward(enc_a[size_t(l)].forward(cur));
      feats[size_t(l)] = cur;
      lvl_h[size_t(l)] = cur.shape[2];
      lvl_w[size_t(l)] = cur.shape[3];
    }

    Tensor<T> low = ltae.forward(feats[size_t(levels - 1)], dates);

    // Upsample the attention to every shallower level.
    attn_up.assign(size_t(levels - 1), {});
    attn_rs.assign(size_t(levels - 1), {});
    const Tensor<T>& a = ltae.attn;
    long heads = a.shape[0];
    Tensor<T> a4({heads * td, 1, a.shape[2], a.shape[3]});
    std::copy(a.data.begin(), a.data.end(), a4.data.begin());
    for (long l = 0; l < levels - 1; ++l) {
      Tensor<T> r = attn_rs[size_t(l)].forward(a4, lvl_h[size_t(l)], lvl_w[size_t(l)]);
      Tensor<T> shaped({heads, td, lvl_h[size_t(l)], lvl_w[size_t(l)]});
      std::copy(r.data.begin(), r.data.end(), shaped.data.begin());
      attn_up[size_t(l)] = std::move(shaped);
    }

    Tensor<T> d = low;
    for (long i = 0; i < levels - 1; ++i) {
      long tgt = levels - 2 - i;
      d = ups[size_t(i)].forward(d);
      if (d.shape[2] != lvl_h[size_t(tgt)] || d.shape[3] != lvl_w[size_t(tgt)])
        d = nn::crop2d(d, 0, 0, lvl_h[size_t(tgt)], lvl_w[size_t(tgt)]);
      Tensor<T> skip = att_collapse(feats[size_t(tgt)], attn_up[size_t(tgt)]);
      d = dec_conv[size_t(i)].forward(nn::concat_channels(d, skip));
    }
    embedding_saved = d;

    Out out;
    out.embedding = d;
    out.sat_logits = sat_out.forward(sat_pre.forward(d));
    return out;
  }

  // Accepts gradients for both outputs; either may be empty.
  void backward(const Tensor<T>& g_embedding, const Tensor<T>& g_sat) {
    long levels = long(cfg.encoder_widths.size());
    Tensor<T> g;
    if (!g_sat.empty()) g = sat_pre.backward(sat_out.backward(g_sat));
    if (!g_embedding.empty()) {
      if (g.empty()) g = g_embedding;
      else
        for (long i = 0; i < g.numel(); ++i) g.data[size_t(i)] += g_embedding.data[size_t(i)];
    }
    if (g.empty()) throw data_error("temporal backward needs at least one output gradient");

    gf_skip.assign(size_t(levels), {});
    Tensor<T> gattn_low;
    long heads = ltae.attn.shape[0];
    long td = ltae.attn.shape[1];

    for (long i = levels - 2; i >= 0; --i) {
      long tgt = levels - 2 - i;
      Tensor<T> gcat = dec_conv[size_t(i)].backward(g);
      Tensor<T> gup, gskip;
      nn::split_channels_grad(gcat, gcat.shape[1] - cfg.encoder_widths[size_t(tgt)], gup, gskip);

      Tensor<T> ga_lvl;
      att_collapse_grad(feats[size_t(tgt)], attn_up[size_t(tgt)], gskip, gf_skip[size_t(tgt)],
                        ga_lvl);
      Tensor<T> ga4({heads * td, 1, ga_lvl.shape[2], ga_lvl.shape[3]});
      std::copy(ga_lvl.data.begin(), ga_lvl.data.end(), ga4.data.begin());
      Tensor<T> gal = attn_rs[size_t(tgt)].backward(ga4);
      if (gattn_low.empty()) {
        gattn_low.resize({heads, td, gal.shape[2], gal.shape[3]});
        gattn_low.zero();
      }
      for (long j = 0; j < gal.numel(); ++j) gattn_low.data[size_t(j)] += gal.data[size_t(j)];

      long up_h = ups[size_t(i)].conv.out_dim(lvl_h[size_t(tgt + 1)]);
      long up_w = ups[size_t(i)].conv.out_dim(lvl_w[size_t(tgt + 1)]);
      if (up_h != gup.shape[2] || up_w != gup.shape[3])
        gup = nn::crop2d_grad(gup, 0, 0, up_h, up_w);
      g = ups[size_t(i)].backward(gup);
    }

    Tensor<T> gfeat = ltae.backward(g, gattn_low);
    for (long l = levels - 1; l >= 0; --l) {
      if (!gf_skip[size_t(l)].empty())
        for (long i = 0; i < gfeat.numel(); ++i)
          gfeat.data[size_t(i)] += gf_skip[size_t(l)].data[size_t(i)];
      gfeat = enc_a[size_t(l)].backward(enc_b[size_t(l)].backward(gfeat));
    }
  }
};

}  // namespace flair::net

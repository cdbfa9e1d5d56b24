#pragma once

#include "flair/rng.hpp"
#include "flair/tensor.hpp"
#include "flair/errors.hpp"

namespace flair::train {

// A geometric augmentation: a quarter-turn rotation followed by optional
// flips. Applies to the aerial patch and its mask only; the satellite
// super-patch stays untouched.
struct Augment {
  bool flip_h = false;
  bool flip_v = false;
  int quarter_turns = 0;  // clockwise
};

inline Augment draw_augment(double p, Rng& rng) {
  Augment a;
  if (rng.uniform(0.0, 1.0) >= p) return a;
  a.flip_h = rng.uniform(0.0, 1.0) < 0.5;
  a.flip_v = rng.uniform(0.0, 1.0) < 0.5;
  a.quarter_turns = int(rng.uniform_int(0, 3));
  return a;
}

namespace detail {
// Source coordinates for output pixel (r, c) on a square side s.
inline void augment_source(const Augment& a, long s, long r, long c, long& sr, long& sc) {
  if (a.flip_v) r = s - 1 - r;
  if (a.flip_h) c = s - 1 - c;
  // Undo the clockwise rotation one quarter turn at a time.
  for (int k = 0; k < a.quarter_turns % 4; ++k) {
    long nr = s - 1 - c, nc = r;
    r = nr;
    c = nc;
  }
  sr = r;
  sc = c;
}
}  // namespace detail

// Works on (..., H, W) tensors with H == W; all leading dims are planes.
template <class U>
Tensor<U> apply_augment(const Tensor<U>& x, const Augment& a) {
  size_t nd = x.shape.size();
  if (nd < 2) throw data_error("augment needs at least 2 dims, got " + x.shape_str());
  long s = x.shape[nd - 1];
  if (x.shape[nd - 2] != s)
    throw data_error("augment needs square planes, got " + x.shape_str());
  long planes = x.numel() / (s * s);
  Tensor<U> y(x.shape);
  for (long pl = 0; pl < planes; ++pl) {
    const U* src = x.ptr() + pl * s * s;
    U* dst = y.ptr() + pl * s * s;
    for (long r = 0; r < s; ++r)
      for (long c = 0; c < s; ++c) {
        long sr, sc;
        detail::augment_source(a, s, r, c, sr, sc);
        dst[r * s + c] = src[sr * s + sc];
      }
  }
  return y;
}

}  // namespace flair::train

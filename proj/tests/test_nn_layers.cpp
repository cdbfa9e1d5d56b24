#include <doctest.h>

#include <cmath>
#include <functional>

#include "flair/nn/basic.hpp"
#include "flair/nn/conv.hpp"
#include "flair/nn/norm.hpp"
#include "flair/rng.hpp"

using namespace flair;
using nn::Param;
using TD = Tensor<double>;

namespace {

TD randn(std::vector<long> shape, Rng& rng, double scale = 1.0) {
  TD t(std::move(shape));
  for (auto& v : t.data) v = rng.normal() * scale;
  return t;
}

double dot(const TD& a, const TD& b) {
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double rel_err(double a, double b) {
  double den = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / den;
}

// Central difference of a scalar loss with respect to one slot.
double fd_slot(double* slot, const std::function<double()>& loss, double h = 1e-6) {
  double orig = *slot;
  *slot = orig + h;
  double lp = loss();
  *slot = orig - h;
  double lm = loss();
  *slot = orig;
  return (lp - lm) / (2 * h);
}

void check_all_slots(TD& vals, const TD& grads, const std::function<double()>& loss,
                     double tol = 1e-5) {
  double worst = 0;
  for (size_t i = 0; i < vals.data.size(); ++i) {
    double fd = fd_slot(&vals.data[i], loss);
    worst = std::max(worst, rel_err(grads.data[i], fd));
  }
  CHECK(worst < tol);
}

// Direct convolution, written independently of the im2col path.
TD conv_direct(const TD& x, const TD& w, const TD* b, long stride, long pad) {
  long n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3];
  long co = w.shape[0], k = w.shape[2];
  long ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  TD y({n, co, ho, wo});
  for (long i = 0; i < n; ++i)
    for (long o = 0; o < co; ++o)
      for (long r = 0; r < ho; ++r)
        for (long q = 0; q < wo; ++q) {
          double s = b ? b->data[size_t(o)] : 0.0;
          for (long c = 0; c < ci; ++c)
            for (long ki = 0; ki < k; ++ki)
              for (long kj = 0; kj < k; ++kj) {
                long ih = r * stride - pad + ki, iw = q * stride - pad + kj;
                if (ih < 0 || ih >= h || iw < 0 || iw >= wd) continue;
                s += x.at4(i, c, ih, iw) * w.at4(o, c, ki, kj);
              }
          y.at4(i, o, r, q) = s;
        }
  return y;
}

// Direct transposed convolution: every input pixel smears a kernel onto the
// output grid.
TD convt_direct(const TD& x, const TD& w, const TD* b, long stride, long pad) {
  long n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3];
  long co = w.shape[1], k = w.shape[2];
  long ho = (h - 1) * stride - 2 * pad + k, wo = (wd - 1) * stride - 2 * pad + k;
  TD y({n, co, ho, wo});
  for (long i = 0; i < n; ++i) {
    for (long o = 0; o < co; ++o)
      for (long r = 0; r < ho; ++r)
        for (long q = 0; q < wo; ++q) y.at4(i, o, r, q) = b ? b->data[size_t(o)] : 0.0;
    for (long c = 0; c < ci; ++c)
      for (long r = 0; r < h; ++r)
        for (long q = 0; q < wd; ++q)
          for (long o = 0; o < co; ++o)
            for (long ki = 0; ki < k; ++ki)
              for (long kj = 0; kj < k; ++kj) {
                long oh = r * stride - pad + ki, ow = q * stride - pad + kj;
                if (oh < 0 || oh >= ho || ow < 0 || ow >= wo) continue;
                y.at4(i, o, oh, ow) += x.at4(i, c, r, q) * w.at4(c, o, ki, kj);
              }
  }
  return y;
}

}  // namespace

TEST_CASE("conv2d forward matches the direct-sum oracle") {
  Rng rng(101);
  for (auto [k, s, p] : {std::tuple{3L, 1L, 1L}, {1L, 1L, 0L}, {3L, 2L, 1L}, {7L, 2L, 3L}}) {
    nn::Conv2d<double> conv;
    conv.init(3, 4, k, s, p, true, rng);
    TD x = randn({2, 3, 9, 11}, rng);
    TD got = conv.forward(x);
    TD want = conv_direct(x, conv.w.v, &conv.b.v, s, p);
    REQUIRE(got.shape == want.shape);
    for (size_t i = 0; i < got.data.size(); ++i)
      CHECK(rel_err(got.data[i], want.data[i]) < 1e-12);
  }
}

TEST_CASE("conv2d gradients agree with finite differences") {
  Rng rng(102);
  nn::Conv2d<double> conv;
  conv.init(2, 3, 3, 2, 1, true, rng);
  TD x = randn({2, 2, 7, 8}, rng);
  TD probe = randn({2, 3, 4, 4}, rng);
  auto loss = [&]() { return dot(conv.forward(x), probe); };
  loss();
  conv.w.g.zero();
  conv.b.g.zero();
  TD gx = conv.backward(probe);
  check_all_slots(x, gx, loss);
  check_all_slots(conv.w.v, conv.w.g, loss);
  check_all_slots(conv.b.v, conv.b.g, loss);
}

TEST_CASE("transposed conv forward matches the smear oracle") {
  Rng rng(103);
  for (auto [k, s, p] : {std::tuple{4L, 2L, 1L}, {2L, 2L, 0L}, {3L, 1L, 1L}}) {
    nn::ConvTranspose2d<double> up;
    up.init(3, 2, k, s, p, true, rng);
    TD x = randn({2, 3, 5, 6}, rng);
    TD got = up.forward(x);
    TD want = convt_direct(x, up.w.v, &up.b.v, s, p);
    REQUIRE(got.shape == want.shape);
    for (size_t i = 0; i < got.data.size(); ++i)
      CHECK(rel_err(got.data[i], want.data[i]) < 1e-12);
  }
}

TEST_CASE("transposed conv doubles spatial dims with k4 s2 p1") {
  Rng rng(104);
  nn::ConvTranspose2d<double> up;
  up.init(2, 2, 4, 2, 1, false, rng);
  TD x = randn({1, 2, 5, 7}, rng);
  CHECK(up.forward(x).shape == std::vector<long>({1, 2, 10, 14}));
}

TEST_CASE("transposed conv gradients agree with finite differences") {
  Rng rng(105);
  nn::ConvTranspose2d<double> up;
  up.init(3, 2, 4, 2, 1, true, rng);
  TD x = randn({1, 3, 4, 5}, rng);
  TD probe = randn({1, 2, 8, 10}, rng);
  auto loss = [&]() { return dot(up.forward(x), probe); };
  loss();
  up.w.g.zero();
  up.b.g.zero();
  TD gx = up.backward(probe);
  check_all_slots(x, gx, loss);
  check_all_slots(up.w.v, up.w.g, loss);
  check_all_slots(up.b.v, up.b.g, loss);
}

TEST_CASE("max pool picks window maxima and routes gradients to them") {
  nn::MaxPool2d<double> pool;
  TD x({1, 1, 4, 4});
  for (long i = 0; i < 16; ++i) x.data[size_t(i)] = double(i);
  TD y = pool.forward(x);
  REQUIRE(y.shape == std::vector<long>({1, 1, 2, 2}));
  CHECK(y.at4(0, 0, 0, 0) == 5.0);   // window around (0,0) reaches x[1][1]
  CHECK(y.at4(0, 0, 1, 1) == 15.0);
  TD gy({1, 1, 2, 2});
  gy.fill(1.0);
  TD gx = pool.backward(gy);
  CHECK(gx.at4(0, 0, 1, 1) == 1.0);
  CHECK(gx.at4(0, 0, 3, 3) == 1.0);
  CHECK(gx.at4(0, 0, 0, 0) == 0.0);
}

TEST_CASE("max pool gradients agree with finite differences off ties") {
  Rng rng(106);
  nn::MaxPool2d<double> pool;
  TD x = randn({2, 3, 7, 7}, rng);  // continuous values: ties have measure zero
  TD probe = randn({2, 3, 4, 4}, rng);
  auto loss = [&]() { return dot(pool.forward(x), probe); };
  loss();
  TD gx = pool.backward(probe);
  check_all_slots(x, gx, loss);
}

TEST_CASE("batch norm normalizes with batch statistics in train mode") {
  Rng rng(107);
  nn::BatchNorm2d<double> bn;
  bn.init(3);
  TD x = randn({4, 3, 5, 5}, rng, 2.0);
  TD y = bn.forward(x, true);
  for (long c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (long i = 0; i < 4; ++i)
      for (long p = 0; p < 25; ++p) {
        double v = y.ptr()[(i * 3 + c) * 25 + p];
        s += v;
        s2 += v * v;
      }
    CHECK(std::abs(s / 100) < 1e-10);
    CHECK(s2 / 100 == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts variance slightly
  }
  // Running stats move toward the batch stats by one momentum step.
  double batch_mean = 0;
  for (long i = 0; i < 4; ++i)
    for (long p = 0; p < 25; ++p) batch_mean += x.ptr()[(i * 3 + 0) * 25 + p];
  batch_mean /= 100;
  CHECK(bn.running_mean.data[0] == doctest::Approx(0.1 * batch_mean).epsilon(1e-10));
}

TEST_CASE("batch norm eval mode uses running statistics") {
  Rng rng(108);
  nn::BatchNorm2d<double> bn;
  bn.init(2);
  bn.running_mean.data = {1.0, -2.0};
  bn.running_var.data = {4.0, 0.25};
  TD x = randn({1, 2, 3, 3}, rng);
  TD y = bn.forward(x, false);
  for (long p = 0; p < 9; ++p) {
    CHECK(y.data[size_t(p)] ==
          doctest::Approx((x.data[size_t(p)] - 1.0) / std::sqrt(4.0 + 1e-5)));
    CHECK(y.data[size_t(9 + p)] ==
          doctest::Approx((x.data[size_t(9 + p)] + 2.0) / std::sqrt(0.25 + 1e-5)));
  }
}

TEST_CASE("batch norm train-mode gradients agree with finite differences") {
  Rng rng(109);
  nn::BatchNorm2d<double> bn;
  bn.init(2);
  TD x = randn({3, 2, 4, 4}, rng);
  TD probe = randn({3, 2, 4, 4}, rng);
  auto loss = [&]() {
    // Keep running stats frozen so repeated forwards are identical.
    auto rm = bn.running_mean, rv = bn.running_var;
    double l = dot(bn.forward(x, true), probe);
    bn.running_mean = rm;
    bn.running_var = rv;
    return l;
  };
  loss();
  bn.gamma.g.zero();
  bn.beta.g.zero();
  TD gx = bn.backward(probe);
  check_all_slots(x, gx, loss, 2e-5);
  check_all_slots(bn.gamma.v, bn.gamma.g, loss);
  check_all_slots(bn.beta.v, bn.beta.g, loss);
}

TEST_CASE("group norm gradients agree with finite differences") {
  Rng rng(110);
  nn::GroupNorm<double> gn;
  gn.init(6, 3);
  TD x = randn({2, 6, 3, 4}, rng);
  TD probe = randn({2, 6, 3, 4}, rng);
  auto loss = [&]() { return dot(gn.forward(x, true), probe); };
  loss();
  gn.gamma.g.zero();
  gn.beta.g.zero();
  TD gx = gn.backward(probe);
  check_all_slots(x, gx, loss, 2e-5);
  check_all_slots(gn.gamma.v, gn.gamma.g, loss);
  check_all_slots(gn.beta.v, gn.beta.g, loss);
}

TEST_CASE("group norm statistics stay within each sample") {
  Rng rng(111);
  nn::GroupNorm<double> gn;
  gn.init(4, 2);
  TD x = randn({2, 4, 3, 3}, rng);
  TD base = gn.forward(x, true);
  // Perturbing sample 1 must not change sample 0's output.
  for (long i = 36; i < 72; ++i) x.data[size_t(i)] += 5.0;
  TD moved = gn.forward(x, true);
  for (long i = 0; i < 36; ++i) CHECK(moved.data[size_t(i)] == base.data[size_t(i)]);
}

TEST_CASE("linear matches a hand matmul and its finite differences") {
  Rng rng(112);
  nn::Linear<double> fc;
  fc.init(3, 2, rng);
  TD x = randn({4, 3}, rng);
  TD y = fc.forward(x);
  for (long r = 0; r < 4; ++r)
    for (long o = 0; o < 2; ++o) {
      double s = fc.b.v.data[size_t(o)];
      for (long i = 0; i < 3; ++i) s += x.at2(r, i) * fc.w.v.at2(o, i);
      CHECK(rel_err(y.at2(r, o), s) < 1e-12);
    }
  TD probe = randn({4, 2}, rng);
  auto loss = [&]() { return dot(fc.forward(x), probe); };
  loss();
  fc.w.g.zero();
  fc.b.g.zero();
  TD gx = fc.backward(probe);
  check_all_slots(x, gx, loss);
  check_all_slots(fc.w.v, fc.w.g, loss);
  check_all_slots(fc.b.v, fc.b.g, loss);
}

TEST_CASE("relu gradient gates on activation sign") {
  Rng rng(113);
  nn::ReLU<double> relu;
  TD x = randn({2, 3, 4, 4}, rng);
  for (auto& v : x.data)
    if (std::abs(v) < 0.05) v = 0.1;  // keep clear of the kink
  TD probe = randn({2, 3, 4, 4}, rng);
  auto loss = [&]() { return dot(relu.forward(x), probe); };
  loss();
  TD gx = relu.backward(probe);
  check_all_slots(x, gx, loss);
}

TEST_CASE("dropout keeps expectation and gates gradients by its mask") {
  Rng rng(114);
  nn::Dropout<double> drop;
  drop.p = 0.5;
  TD x({1, 1, 50, 50});
  x.fill(1.0);
  Rng r2(99);
  TD y = drop.forward(x, true, r2);
  double mean = 0;
  long kept = 0;
  for (double v : y.data) {
    mean += v;
    if (v != 0) {
      CHECK(v == 2.0);  // inverted scaling
      ++kept;
    }
  }
  CHECK(mean / 2500 == doctest::Approx(1.0).epsilon(0.1));
  TD gy(y.shape);
  gy.fill(1.0);
  TD gx = drop.backward(gy);
  long grad_kept = 0;
  for (double v : gx.data)
    if (v != 0) ++grad_kept;
  CHECK(grad_kept == kept);

  // Eval mode passes through untouched.
  TD ye = drop.forward(x, false, r2);
  CHECK(ye.data == x.data);
  CHECK(drop.backward(gy).data == gy.data);
}

TEST_CASE("nearest upsample duplicates pixels and pools gradients") {
  Rng rng(115);
  nn::UpsampleNearest2x<double> up;
  TD x = randn({1, 2, 3, 3}, rng);
  TD y = up.forward(x);
  REQUIRE(y.shape == std::vector<long>({1, 2, 6, 6}));
  CHECK(y.at4(0, 1, 4, 5) == x.at4(0, 1, 2, 2));
  TD probe = randn({1, 2, 6, 6}, rng);
  auto loss = [&]() { return dot(up.forward(x), probe); };
  loss();
  TD gx = up.backward(probe);
  check_all_slots(x, gx, loss);
}

TEST_CASE("bilinear 2x2 to 4x4 reproduces the closed-form weights") {
  nn::BilinearResize<double> bi;
  TD x({1, 1, 2, 2});
  double a = 3.0, b = 7.0, c = -1.0, d = 5.0;
  x.data = {a, b, c, d};
  TD y = bi.forward(x, 4, 4);
  // Half-pixel sampling of a 2-wide axis at 4 samples: a, .75a+.25b, .25a+.75b, b.
  CHECK(y.at4(0, 0, 0, 0) == doctest::Approx(a));
  CHECK(y.at4(0, 0, 0, 1) == doctest::Approx(0.75 * a + 0.25 * b));
  CHECK(y.at4(0, 0, 0, 2) == doctest::Approx(0.25 * a + 0.75 * b));
  CHECK(y.at4(0, 0, 0, 3) == doctest::Approx(b));
  CHECK(y.at4(0, 0, 3, 0) == doctest::Approx(c));
  CHECK(y.at4(0, 0, 1, 1) ==
        doctest::Approx(0.75 * (0.75 * a + 0.25 * b) + 0.25 * (0.75 * c + 0.25 * d)));
}

TEST_CASE("bilinear resize is exact on constant fields any direction") {
  nn::BilinearResize<double> bi;
  for (auto [ih, iw, oh, ow] : {std::tuple{5L, 7L, 13L, 3L}, {8L, 8L, 8L, 8L}, {9L, 4L, 3L, 11L}}) {
    TD x({1, 2, ih, iw});
    x.fill(4.25);
    TD y = bi.forward(x, oh, ow);
    for (double v : y.data) CHECK(v == doctest::Approx(4.25).epsilon(1e-12));
  }
}

TEST_CASE("bilinear gradients agree with finite differences") {
  Rng rng(116);
  nn::BilinearResize<double> bi;
  TD x = randn({1, 2, 4, 5}, rng);
  TD probe = randn({1, 2, 7, 3}, rng);
  auto loss = [&]() { return dot(bi.forward(x, 7, 3), probe); };
  loss();
  TD gx = bi.backward(probe);
  check_all_slots(x, gx, loss);
}

TEST_CASE("crop and concat helpers invert cleanly") {
  Rng rng(117);
  TD x = randn({2, 3, 6, 7}, rng);
  TD c = nn::crop2d(x, 1, 2, 4, 4);
  REQUIRE(c.shape == std::vector<long>({2, 3, 4, 4}));
  CHECK(c.at4(1, 2, 0, 0) == x.at4(1, 2, 1, 2));
  TD probe = randn({2, 3, 4, 4}, rng);
  TD back = nn::crop2d_grad(probe, 1, 2, 6, 7);
  CHECK(back.at4(0, 0, 1, 2) == probe.at4(0, 0, 0, 0));
  CHECK(back.at4(0, 0, 0, 0) == 0.0);
  CHECK_THROWS_AS(nn::crop2d(x, 4, 4, 4, 4), data_error);

  TD a = randn({1, 2, 3, 3}, rng), b = randn({1, 4, 3, 3}, rng);
  TD cat = nn::concat_channels(a, b);
  REQUIRE(cat.shape == std::vector<long>({1, 6, 3, 3}));
  TD ga, gb;
  nn::split_channels_grad(cat, 2, ga, gb);
  CHECK(ga.data == a.data);
  CHECK(gb.data == b.data);
}

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flair/rng.hpp"
#include "flair/tensor.hpp"

namespace flair::nn {

// A learnable tensor and its gradient accumulator.
template <class T>
struct Param {
  Tensor<T> v;
  Tensor<T> g;

  void resize(std::vector<long> shape) {
    v.resize(shape);
    g.resize(std::move(shape));
  }
  long numel() const { return v.numel(); }
};

template <class T>
struct ParamRef {
  std::string name;
  Param<T>* p = nullptr;
};

template <class T>
using ParamList = std::vector<ParamRef<T>>;

// He-normal fill for layers feeding ReLUs.
template <class T>
void init_he(Param<T>& p, long fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / double(fan_in));
  for (auto& v : p.v.data) v = T(rng.normal() * std);
}

// Uniform +-1/sqrt(fan_in), the usual linear-layer default.
template <class T>
void init_uniform(Param<T>& p, long fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(double(fan_in));
  for (auto& v : p.v.data) v = T(rng.uniform(-bound, bound));
}

template <class T>
void zero_grads(const ParamList<T>& params) {
  for (auto& r : params) r.p->g.zero();
}

template <class T>
long param_count(const ParamList<T>& params) {
  long n = 0;
  for (auto& r : params) n += r.p->numel();
  return n;
}

}  // namespace flair::nn

#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flair/errors.hpp"

namespace flair {

// Dense row-major n-d array. Value semantics, nothing clever: shape plus a
// flat vector. All the numeric code in this project works on these.
template <class T>
struct Tensor {
  std::vector<long> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<long> s) { resize(std::move(s)); }
  Tensor(std::vector<long> s, T fill_value) {
    resize(std::move(s));
    fill(fill_value);
  }

  void resize(std::vector<long> s) {
    shape = std::move(s);
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static long numel_of(const std::vector<long>& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
  }

  long numel() const { return static_cast<long>(data.size()); }
  bool empty() const { return data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(T(0)); }

  long dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  // 4-d accessor (N,C,H,W) used by the nn code.
  T& at4(long n, long c, long h, long w) {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  T at4(long n, long c, long h, long w) const {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  T& at3(long c, long h, long w) {
    return data[static_cast<size_t>((c * shape[1] + h) * shape[2] + w)];
  }
  T at3(long c, long h, long w) const {
    return data[static_cast<size_t>((c * shape[1] + h) * shape[2] + w)];
  }
  T& at2(long r, long c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  T at2(long r, long c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const { return shape_str_of(shape); }

  static std::string shape_str_of(const std::vector<long>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
  }
};

template <class T>
void check_shape(const Tensor<T>& t, const std::vector<long>& want, const std::string& what) {
  if (t.shape != want) {
    throw format_error(what + ": expected shape " + Tensor<T>::shape_str_of(want) + ", found " +
                       t.shape_str());
  }
}

}  // namespace flair

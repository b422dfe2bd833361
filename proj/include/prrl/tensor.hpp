#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "prrl/errors.hpp"

namespace prrl {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense tensor, row-major. S is float in production; the double
// instantiation backs the finite-difference reference path in tests.
template <class S>
struct TensorT {
  Shape shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(Shape sh) : shape(std::move(sh)), data(shape_numel(shape), S(0)) {}
  TensorT(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
    if ((int64_t)data.size() != shape_numel(shape))
      throw data_error("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  int64_t numel() const { return (int64_t)data.size(); }
  int rank() const { return (int)shape.size(); }
  int dim(int i) const { return shape[i]; }

  // 2-D accessors; rank-1 tensors count as a single row.
  int rows() const { return rank() >= 2 ? shape[0] : 1; }
  int cols() const { return rank() >= 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }
  S* row(int i) { return data.data() + (size_t)i * cols(); }
  const S* row(int i) const { return data.data() + (size_t)i * cols(); }
  S& at(int i, int j) { return data[(size_t)i * cols() + j]; }
  S at(int i, int j) const { return data[(size_t)i * cols() + j]; }
  S& operator[](int64_t i) { return data[i]; }
  S operator[](int64_t i) const { return data[i]; }

  static TensorT zeros(Shape sh) { return TensorT(std::move(sh)); }

  static TensorT full(Shape sh, S v) {
    TensorT t(std::move(sh));
    for (auto& x : t.data) x = v;
    return t;
  }

  static TensorT from(Shape sh, std::vector<S> d) { return TensorT(std::move(sh), std::move(d)); }

  static TensorT randn(Shape sh, double stddev, std::mt19937& rng) {
    TensorT t(std::move(sh));
    std::normal_distribution<double> d(0.0, stddev);
    for (auto& x : t.data) x = (S)d(rng);
    return t;
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) t.data[i] = (U)data[i];
    return t;
  }

  bool all_finite() const {
    for (S x : data)
      if (!std::isfinite((double)x)) return false;
    return true;
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;

}  // namespace prrl

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jigen {

inline int64_t shape_count(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor. Storage is float in the training path; the
// finite-difference checker instantiates the same code with double.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> v;

  TensorT() = default;
  explicit TensorT(std::vector<int> s)
      : shape(std::move(s)), v(static_cast<size_t>(shape_count(shape)), T(0)) {}
  TensorT(std::vector<int> s, std::vector<T> values)
      : shape(std::move(s)), v(std::move(values)) {
    if (static_cast<int64_t>(v.size()) != shape_count(shape)) {
      throw std::invalid_argument("tensor: value count " +
                                  std::to_string(v.size()) +
                                  " does not match shape " + shape_str(shape));
    }
  }

  static TensorT scalar(T x) { return TensorT({1}, {x}); }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool is_scalar() const { return size() == 1; }
  T item() const {
    if (!is_scalar()) {
      throw std::invalid_argument("tensor: item() on non-scalar " +
                                  shape_str(shape));
    }
    return v[0];
  }

  T& operator[](size_t i) { return v[i]; }
  const T& operator[](size_t i) const { return v[i]; }

  // NCHW accessor.
  T& at4(int n, int c, int h, int w) {
    return v[((static_cast<size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return v[((static_cast<size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }

  T& at2(int r, int c) { return v[static_cast<size_t>(r) * dim(1) + c]; }
  const T& at2(int r, int c) const {
    return v[static_cast<size_t>(r) * dim(1) + c];
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

template <typename U, typename T>
TensorT<U> tensor_cast(const TensorT<T>& t) {
  TensorT<U> out;
  out.shape = t.shape;
  out.v.resize(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) out.v[i] = static_cast<U>(t.v[i]);
  return out;
}

using Tensor = TensorT<float>;

}  // namespace jigen

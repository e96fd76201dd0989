#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "dyck/errors.hpp"
#include "dyck/rng.hpp"

namespace dyck {

// All tensor buffers share one 64-byte alignment so vectorized kernels pick
// identical code paths for identical shapes; results are then independent of
// heap state, which the bit-reproducibility contracts rely on.
template <class T, size_t Align>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, size_t n) {
    ::operator delete(p, n * sizeof(T), std::align_val_t(Align));
  }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

using FloatBuf = std::vector<float, AlignedAllocator<float, 64>>;

// Dense row-major float32 tensor. Shapes are small vectors of ints; rank-2
// is the common case, attention uses rank-4.
struct Tensor {
  std::vector<int> shape;
  FloatBuf data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t p = 1;
    for (int d : s) {
      if (d < 0) throw ShapeMismatch("negative dimension");
      p *= d;
    }
    return p;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s), 0.0f); }
  static Tensor ones(std::vector<int> s) { return Tensor(std::move(s), 1.0f); }
  static Tensor full(std::vector<int> s, float v) { return Tensor(std::move(s), v); }

  static Tensor from(std::vector<int> s, const std::vector<float>& values) {
    Tensor t;
    t.shape = std::move(s);
    if (numel_of(t.shape) != static_cast<int64_t>(values.size()))
      throw ShapeMismatch("from(): value count does not match shape");
    t.data.assign(values.begin(), values.end());
    return t;
  }

  static Tensor from(std::vector<int> s, std::initializer_list<float> values) {
    Tensor t;
    t.shape = std::move(s);
    if (numel_of(t.shape) != static_cast<int64_t>(values.size()))
      throw ShapeMismatch("from(): value count does not match shape");
    t.data.assign(values.begin(), values.end());
    return t;
  }

  static Tensor from(std::vector<int> s, FloatBuf values) {
    Tensor t;
    t.shape = std::move(s);
    if (numel_of(t.shape) != static_cast<int64_t>(values.size()))
      throw ShapeMismatch("from(): value count does not match shape");
    t.data = std::move(values);
    return t;
  }

  std::vector<float> to_vector() const { return {data.begin(), data.end()}; }

  static Tensor randu(std::vector<int> s, Rng& rng, float lo, float hi) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
  }

  static Tensor randn(std::vector<int> s, Rng& rng, double mu = 0.0, double sigma = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = static_cast<float>(rng.normal(mu, sigma));
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool empty() const { return data.empty(); }

  // last-dim size and the product of all leading dims; valid for rank >= 1
  int cols() const {
    if (shape.empty()) throw ShapeMismatch("cols() on rank-0 tensor");
    return shape.back();
  }
  int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  float& at(std::initializer_list<int> idx) {
    return data[static_cast<size_t>(flat_index(idx))];
  }
  float at(std::initializer_list<int> idx) const {
    return data[static_cast<size_t>(flat_index(idx))];
  }

  int64_t flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) throw ShapeMismatch("bad index rank");
    int64_t flat = 0;
    int i = 0;
    for (int v : idx) {
      flat = flat * shape[static_cast<size_t>(i)] + v;
      ++i;
    }
    return flat;
  }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}
inline std::string shape_str(const Tensor& t) { return shape_str(t.shape); }

inline bool all_finite(const Tensor& t) {
  for (float v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace dyck

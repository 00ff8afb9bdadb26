#pragma once
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include "faultface/error.hpp"

namespace faultface::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Cache-line aligned storage. Eigen picks its vectorized reduction split from the
/// buffer address, so fixed alignment keeps results bit-identical run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of 64-bit reals. For batched activations the leading
/// dimension is the batch.
struct NdArray {
  Shape shape;
  Buffer data;

  NdArray() = default;
  explicit NdArray(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
  NdArray(Shape s, Buffer d) : shape(std::move(s)), data(std::move(d)) { check(); }
  NdArray(Shape s, const std::vector<double>& d) : shape(std::move(s)), data(d.begin(), d.end()) { check(); }
  NdArray(Shape s, std::initializer_list<double> d) : shape(std::move(s)), data(d) { check(); }

  void check() const {
    if (numel(shape) != data.size())
      throw numeric_error("NdArray: shape " + to_string(shape) + " does not match " + std::to_string(data.size()) +
                          " values");
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  bool operator==(const NdArray&) const = default;
};

/// Shape with a leading batch dimension prepended.
inline Shape batched(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace faultface::nn

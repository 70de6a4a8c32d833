#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <vector>

#include "layerfield/common.hpp"
#include "layerfield/rng.hpp"

namespace lf {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Dense row-major real tensor. The scalar type is a template parameter so the
// same pipeline runs in float for training and double for gradient oracles.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(size_t(shape_numel(shape)), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(int64_t(data.size()) == shape_numel(shape),
            "tensor data length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  int64_t numel() const { return int64_t(data.size()); }
  int rank() const { return int(shape.size()); }

  T& operator[](int64_t i) { return data[size_t(i)]; }
  const T& operator[](int64_t i) const { return data[size_t(i)]; }

  // Row-major index helpers for the common low-rank cases.
  T& at(int64_t i, int64_t j) { return data[size_t(i * shape[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return data[size_t(i * shape[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t k) {
    return data[size_t((i * shape[1] + j) * shape[2] + k)];
  }
  const T& at(int64_t i, int64_t j, int64_t k) const {
    return data[size_t((i * shape[1] + j) * shape[2] + k)];
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

template <typename T>
Tensor<T> random_normal(Shape s, Rng& rng, T stddev = T(1), T mean = T(0)) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data) v = mean + stddev * T(rng.normal());
  return t;
}

template <typename T>
Tensor<T> random_uniform(Shape s, Rng& rng, T lo, T hi) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data) v = T(rng.uniform(double(lo), double(hi)));
  return t;
}

// ---------------------------------------------------------------------------
// Binary tensor serialization: 8-byte magic, then version, dtype code, rank
// and extents as 64-bit little-endian integers, then raw little-endian values.
// Shared by every checkpoint format in the project.
// ---------------------------------------------------------------------------

inline constexpr char kTensorMagic[8] = {'L', 'F', 'T', 'E', 'N', 'S', 'R', '\0'};
inline constexpr uint64_t kTensorVersion = 1;
inline constexpr uint64_t kDtypeF32 = 0;
inline constexpr uint64_t kDtypeF64 = 1;

namespace detail {

inline void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  require_io(bool(is), "unexpected end of tensor stream");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

template <typename T>
void write_scalar_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;
  U bits;
  std::memcpy(&bits, &v, sizeof(T));
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = (unsigned char)((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_scalar_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  U bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i) bits |= U(b[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  require_numeric(t.all_finite(), "refusing to serialize tensor with NaN/Inf values");
  os.write(kTensorMagic, 8);
  detail::write_u64(os, kTensorVersion);
  detail::write_u64(os, sizeof(T) == 4 ? kDtypeF32 : kDtypeF64);
  detail::write_u64(os, uint64_t(t.rank()));
  for (int64_t e : t.shape) detail::write_u64(os, uint64_t(e));
  for (T v : t.data) detail::write_scalar_le(os, v);
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  require_io(bool(is) && std::memcmp(magic, kTensorMagic, 8) == 0, "bad tensor magic");
  const uint64_t version = detail::read_u64(is);
  require_io(version == kTensorVersion, "unsupported tensor version " + std::to_string(version));
  const uint64_t dtype = detail::read_u64(is);
  require_io(dtype == kDtypeF32 || dtype == kDtypeF64, "unknown tensor dtype code");
  const uint64_t rank = detail::read_u64(is);
  require_io(rank <= 8, "implausible tensor rank");
  Shape shape(rank);
  for (auto& e : shape) e = int64_t(detail::read_u64(is));
  Tensor<T> out;
  if (dtype == (sizeof(T) == 4 ? kDtypeF32 : kDtypeF64)) {
    out = Tensor<T>(shape);
    for (auto& v : out.data) v = detail::read_scalar_le<T>(is);
  } else if (dtype == kDtypeF32) {
    Tensor<float> tmp(shape);
    for (auto& v : tmp.data) v = detail::read_scalar_le<float>(is);
    out = tmp.template cast<T>();
  } else {
    Tensor<double> tmp(shape);
    for (auto& v : tmp.data) v = detail::read_scalar_le<double>(is);
    out = tmp.template cast<T>();
  }
  require_io(bool(is), "truncated tensor stream");
  return out;
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  require_io(bool(os), "cannot open for write: " + path);
  write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require_io(bool(is), "cannot open: " + path);
  return read_tensor<T>(is);
}

}  // namespace lf

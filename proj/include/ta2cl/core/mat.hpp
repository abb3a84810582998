// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ta2cl/core/binary_io.hpp"
#include "ta2cl/core/error.hpp"

namespace ta2cl {

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Mat: data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("Mat::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Mat(r, c, std::move(data));
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }
  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row-major 3-d array; used for stacks of channel x time windows and
/// per-window activation maps.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0)
      : dims_{d0, d1, d2}, data_(d0 * d1 * d2, fill) {}

  std::size_t dim0() const { return dims_[0]; }
  std::size_t dim1() const { return dims_[1]; }
  std::size_t dim2() const { return dims_[2]; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  Mat slice(std::size_t i) const {
    const std::size_t n = dims_[1] * dims_[2];
    return Mat(dims_[1], dims_[2],
               std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                   data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }

  void set_slice(std::size_t i, const Mat& m) {
    if (m.rows() != dims_[1] || m.cols() != dims_[2]) {
      throw ShapeError("Tensor3::set_slice: expected " + std::to_string(dims_[1]) + "x" +
                       std::to_string(dims_[2]) + ", got " + m.shape_str());
    }
    std::copy(m.flat().begin(), m.flat().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(i * m.size()));
  }

  std::span<const double> flat() const { return data_; }

 private:
  std::size_t dims_[3] = {0, 0, 0};
  std::vector<double> data_;
};

inline void require_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_str() + " by " + b.shape_str());
  }
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

/// a * b^T without materialising the transpose.
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: cannot multiply " + a.shape_str() + " by transpose of " +
                     b.shape_str());
  }
  Mat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

/// a^T * b.
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: cannot multiply transpose of " + a.shape_str() + " by " +
                     b.shape_str());
  }
  Mat out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Mat& add_inplace(Mat& a, const Mat& b, double scale = 1.0) {
  require_same_shape(a, b, "add");
  auto ad = a.flat();
  auto bd = b.flat();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += scale * bd[i];
  return a;
}

inline Mat add(Mat a, const Mat& b) { return add_inplace(a, b); }
inline Mat sub(Mat a, const Mat& b) { return add_inplace(a, b, -1.0); }

inline Mat scale(Mat a, double s) {
  for (double& v : a.flat()) v *= s;
  return a;
}

inline Mat hadamard(Mat a, const Mat& b) {
  require_same_shape(a, b, "hadamard");
  auto ad = a.flat();
  auto bd = b.flat();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] *= bd[i];
  return a;
}

inline double sum(const Mat& a) {
  double s = 0.0;
  for (double v : a.flat()) s += v;
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double frobenius_norm(const Mat& a) { return std::sqrt(dot(a.flat(), a.flat())); }

inline double max_abs(const Mat& a) {
  double m = 0.0;
  for (double v : a.flat()) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const Mat& a) {
  return std::all_of(a.flat().begin(), a.flat().end(), [](double v) { return std::isfinite(v); });
}

inline Mat permute_rows(const Mat& a, std::span<const std::size_t> perm) {
  if (perm.size() != a.rows()) throw ShapeError("permute_rows: permutation length mismatch");
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto src = a.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// MAT1: magic, u32 rows, u32 cols, row-major float64 payload (all little-endian).
inline constexpr std::string_view kMatMagic = "MAT1";

inline void write_mat(std::ostream& out, const Mat& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("write_mat: dimensions exceed u32");
  }
  binary::write_magic(out, kMatMagic);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.flat()) binary::write_le<double>(out, v);
}

inline Mat read_mat(std::istream& in) {
  binary::expect_magic(in, kMatMagic);
  const auto rows = binary::read_le<std::uint32_t>(in);
  const auto cols = binary::read_le<std::uint32_t>(in);
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& v : data) v = binary::read_le<double>(in);
  return Mat(rows, cols, std::move(data));
}

}  // namespace ta2cl

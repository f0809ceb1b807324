/*
 * Copyright 2026 The ps-lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PSLAB_MATRIX_HPP_
#define PSLAB_MATRIX_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pslab/error.hpp"

namespace pslab {

/// Dense row-major matrix of doubles. Rows are the unit of work everywhere
/// in the library (one embedding, one proxy, one output neuron), so row
/// access hands out spans.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ContractError("Matrix: data length " +
                          std::to_string(data_.size()) + " != " +
                          std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ContractError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  void require_finite(const char* what) const {
    if (!all_finite()) {
      throw NumericError(std::string(what) + ": non-finite entry");
    }
  }

  void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }

  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }

  Matrix& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void require_same_shape(const Matrix& o, const char* who) const {
    if (!same_shape(o)) throw ContractError(std::string(who) + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

// Rows of `a` followed by rows of `b`. Either may be empty (0 rows).
inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) throw ContractError("vstack: column mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double frobenius_norm(const Matrix& m) { return norm(m.data()); }

// a += s * b
inline void axpy(double s, std::span<const double> b, std::span<double> a) {
  if (a.size() != b.size()) throw ContractError("axpy: length mismatch");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += s * b[k];
}

inline void require_direction(std::span<const double> v, const char* who) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DegenerateInput(std::string(who) + ": non-finite vector");
    }
  }
  if (!(norm(v) > 0.0)) throw DegenerateInput(std::string(who) + ": zero vector");
}

inline std::vector<double> l2_normalize(std::span<const double> v) {
  require_direction(v, "l2_normalize");
  const double n = norm(v);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// Row-wise l2 normalisation; also returns the original row norms.
inline std::pair<Matrix, std::vector<double>> normalize_rows(const Matrix& m,
                                                             const char* who) {
  Matrix out = m;
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    require_direction(m.row(r), who);
    norms[r] = norm(m.row(r));
    for (double& x : out.row(r)) x /= norms[r];
  }
  return {std::move(out), std::move(norms)};
}

/// Cosine of the angle between a and b, clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> a,
                                std::span<const double> b) {
  require_direction(a, "cosine_similarity");
  require_direction(b, "cosine_similarity");
  const double c = dot(a, b) / (norm(a) * norm(b));
  return std::clamp(c, -1.0, 1.0);
}

// a * b^T, i.e. out(i, k) = <a_i, b_k>.
inline Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ContractError("matmul_transpose_b: inner dim");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < b.rows(); ++k) out(i, k) = dot(a.row(i), b.row(k));
  }
  return out;
}

}  // namespace pslab

#endif  // PSLAB_MATRIX_HPP_

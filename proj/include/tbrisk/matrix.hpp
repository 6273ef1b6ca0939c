/* Copyright 2026 The tbrisk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "tbrisk/errors.hpp"

namespace tbrisk {

// Dense row-major matrix of doubles. All stages compute in 64-bit even where
// file formats store 32-bit: HSIC subtracts large near-equal quantities.
//
// A Matrix is immutable by convention once handed to another module; the
// mutating API exists for the construction phase only. All operations on it
// are pure, so concurrent reads are safe.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    check_dims();
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims();
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
    check_finite();
  }

  // Row-literal constructor for tests and small fixtures.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0 || rows.begin()->size() == 0) {
      throw ShapeError("from_rows requires at least one row and one column");
    }
    const std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("ragged row in from_rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.set(i, i, 1.0);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return at(i, j); }
  void set(std::size_t i, std::size_t j, double v) { data_[i * cols_ + j] = v; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& mutable_data() { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Copy of the half-open row range [begin, end).
  Matrix rows_slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > rows_) {
      throw ShapeError("row slice [" + std::to_string(begin) + ", " +
                       std::to_string(end) + ") out of range for " +
                       std::to_string(rows_) + " rows");
    }
    Matrix out(end - begin, cols_);
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
              data_.begin() + static_cast<std::ptrdiff_t>(end * cols_),
              out.data_.begin());
    return out;
  }

  // Re-validate finiteness after in-place construction writes.
  void check_finite() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw NumericalError("non-finite matrix entry at flat index " +
                             std::to_string(i));
      }
    }
  }

 private:
  void check_dims() const {
    if (rows_ == 0 || cols_ == 0) {
      throw ShapeError("matrix dimensions must be at least 1x1, got " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out.mutable_data()[i * out.cols() + j] += aik * b.at(k, j);
      }
    }
  }
  out.check_finite();
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.set(j, i, a.at(i, j));
  return out;
}

inline double frobenius_norm(const Matrix& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return std::sqrt(sum);
}

inline std::vector<double> column_means(const Matrix& x) {
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += x.at(i, j);
  for (double& m : mean) m /= static_cast<double>(x.rows());
  return mean;
}

// Subtracts each column's mean. Requires at least two rows; a single
// observation has no meaningful centering.
inline Matrix column_center(const Matrix& x) {
  if (x.rows() < 2) {
    throw DegenerateInputError("column_center requires >= 2 rows, got " +
                               std::to_string(x.rows()));
  }
  const std::vector<double> mean = column_means(x);
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      out.set(i, j, x.at(i, j) - mean[j]);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.mutable_data()[i] = a.data()[i] + b.data()[i];
  return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.mutable_data()[i] = a.data()[i] - b.data()[i];
  return out;
}

inline Matrix scale(const Matrix& a, double c) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.mutable_data()[i] = c * a.data()[i];
  out.check_finite();
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace tbrisk

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "feae/errors.hpp"

namespace feae {

/// Dense row-major matrix. Float for training, double for gradient checks.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(rows_, cols_));
  }
  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw DimensionError("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix row_vector(std::span<const T> v) {
    return Matrix(1, v.size(), std::vector<T>(v.begin(), v.end()));
  }
  static Matrix column_vector(std::span<const T> v) {
    return Matrix(v.size(), 1, std::vector<T>(v.begin(), v.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  std::string shape() const { return shape_string(rows_, cols_); }

  template <class U>
  Matrix<U> cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

namespace detail {

template <class T>
using EigenRowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const EigenRowMajor<T>> view(const Matrix<T>& m) {
  return {m.data().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}

template <class T>
Eigen::Map<EigenRowMajor<T>> view(Matrix<T>& m) {
  return {m.data().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}

}  // namespace detail

enum class Transpose { No, Yes };

/// out += op(a) * op(b). Shapes are validated against the transposition flags.
template <class T>
void gemm_accumulate(const Matrix<T>& a, Transpose ta, const Matrix<T>& b, Transpose tb,
                     Matrix<T>& out) {
  const std::size_t ar = ta == Transpose::No ? a.rows() : a.cols();
  const std::size_t ac = ta == Transpose::No ? a.cols() : a.rows();
  const std::size_t br = tb == Transpose::No ? b.rows() : b.cols();
  const std::size_t bc = tb == Transpose::No ? b.cols() : b.rows();
  if (ac != br || out.rows() != ar || out.cols() != bc)
    throw DimensionError("matmul shape mismatch: " + Matrix<T>::shape_string(ar, ac) + " times " +
                         Matrix<T>::shape_string(br, bc));
  if (ar == 0 || bc == 0 || ac == 0) return;
  auto o = detail::view(out);
  auto av = detail::view(a);
  auto bv = detail::view(b);
  if (ta == Transpose::No && tb == Transpose::No)
    o.noalias() += av * bv;
  else if (ta == Transpose::Yes && tb == Transpose::No)
    o.noalias() += av.transpose() * bv;
  else if (ta == Transpose::No && tb == Transpose::Yes)
    o.noalias() += av * bv.transpose();
  else
    o.noalias() += av.transpose() * bv.transpose();
}

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul shape mismatch: " + a.shape() + " times " + b.shape());
  Matrix<T> out(a.rows(), b.cols());
  gemm_accumulate(a, Transpose::No, b, Transpose::No, out);
  return out;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

/// Numerically stable logistic function.
template <class T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace feae

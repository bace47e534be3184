#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "stategate/errors.hpp"

namespace stategate {

/// Dense row-major matrix.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  BasicMatrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ConfigError("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const BasicMatrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using Vector = std::vector<float>;

inline constexpr float kCosineEps = 1e-8f;

namespace detail {

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
void require_same_shape(const BasicMatrix<T>& a, const BasicMatrix<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                      " vs " + shape_str(b.rows(), b.cols()));
  }
}

}  // namespace detail

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: dimension mismatch " + detail::shape_str(a.rows(), a.cols()) +
                      " x " + detail::shape_str(b.rows(), b.cols()));
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      o[j] = acc;
    }
  }
  return out;
}

// a * b^T without materializing the transpose.
template <typename T>
BasicMatrix<T> matmul_transposed(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("matmul_transposed: dimension mismatch " + detail::shape_str(a.rows(), a.cols()) +
                      " x " + detail::shape_str(b.cols(), b.rows()));
  }
  BasicMatrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto bj = b.row(j);
      T acc = T(0);
      for (std::size_t k = 0; k < ai.size(); ++k) acc += ai[k] * bj[k];
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "add");
  BasicMatrix<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

template <typename T>
BasicMatrix<T> subtract(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "subtract");
  BasicMatrix<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

template <typename T>
BasicMatrix<T> scale(const BasicMatrix<T>& a, T s) {
  BasicMatrix<T> out = a;
  for (auto& x : out.data()) x *= s;
  return out;
}

// Per-row max subtraction keeps exp() in range.
template <typename T>
BasicMatrix<T> row_softmax(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const T mx = *std::max_element(in.begin(), in.end());
    T sum = T(0);
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (auto& x : o) x /= sum;
  }
  return out;
}

template <typename T>
std::vector<T> rowwise_l2(const BasicMatrix<T>& m) {
  std::vector<T> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    T acc = T(0);
    for (T x : m.row(i)) acc += x * x;
    out[i] = std::sqrt(acc);
  }
  return out;
}

template <typename T>
std::vector<T> rowwise_cosine(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "rowwise_cosine");
  std::vector<T> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    auto bi = b.row(i);
    T dot = T(0), na = T(0), nb = T(0);
    for (std::size_t j = 0; j < ai.size(); ++j) {
      dot += ai[j] * bi[j];
      na += ai[j] * ai[j];
      nb += bi[j] * bi[j];
    }
    const T c = dot / (std::sqrt(na) * std::sqrt(nb) + T(kCosineEps));
    out[i] = std::clamp(c, T(-1), T(1));
  }
  return out;
}

// Clamped to the open unit interval: in float, 1/(1+exp(-x)) rounds to
// exactly 1 for x above ~17.
template <typename T>
T sigmoid(T x) {
  const T y = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  constexpr T lo = std::numeric_limits<T>::denorm_min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(y, lo, hi);
}

template <typename T>
std::vector<T> sigmoid(const std::vector<T>& v) {
  std::vector<T> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](T x) { return sigmoid(x); });
  return out;
}

template <typename T>
BasicMatrix<T> col_broadcast_mul(const BasicMatrix<T>& m, const std::vector<T>& v) {
  if (v.size() != m.cols()) {
    throw ConfigError("col_broadcast_mul: vector length " + std::to_string(v.size()) +
                      " != cols " + std::to_string(m.cols()));
  }
  BasicMatrix<T> out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) o[j] *= v[j];
  }
  return out;
}

template <typename T>
std::vector<T> rowwise_max(const BasicMatrix<T>& m) {
  if (m.cols() == 0) throw ConfigError("rowwise_max: matrix has zero columns");
  std::vector<T> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    out[i] = *std::max_element(r.begin(), r.end());
  }
  return out;
}

template <typename T>
T mean(const std::vector<T>& v) {
  if (v.empty()) return T(0);
  T acc = T(0);
  for (T x : v) acc += x;
  return acc / static_cast<T>(v.size());
}

template <typename T>
bool all_finite(const BasicMatrix<T>& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](T x) { return std::isfinite(x); });
}

}  // namespace stategate

#pragma once

// Dense linear algebra kernels shared by the value and tape evaluation paths.
// Every forward computation in the library funnels through the functions in
// this header so that a plain evaluation and a recorded (differentiable)
// evaluation of the same expression produce bit-identical results.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmn {

using Vector = std::vector<double>;

/// Raised when operand shapes are incompatible.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised on NaN/Inf inputs or results.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on malformed or inconsistent data files and datasets.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Attention columns carrying this score receive exactly zero weight.
inline constexpr double kMaskSentinel = std::numeric_limits<double>::lowest();

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static Matrix column(std::span<const double> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector column_copy(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << what << ": non-finite value at index " << i;
      throw NumericalError(os.str());
    }
  }
}

namespace kernel {

// out += W x
inline void gemv_acc(const Matrix& W, std::span<const double> x, std::span<double> out) {
  const std::size_t rows = W.rows();
  const std::size_t cols = W.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = W.values().data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += w[c] * x[c];
    out[r] += s;
  }
}

// out += W^T g
inline void gemv_t_acc(const Matrix& W, std::span<const double> g, std::span<double> out) {
  const std::size_t rows = W.rows();
  const std::size_t cols = W.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* w = W.values().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += w[c] * gr;
  }
}

// G += g x^T
inline void outer_acc(Matrix& G, std::span<const double> g, std::span<const double> x) {
  const std::size_t cols = G.cols();
  auto data = G.values();
  for (std::size_t r = 0; r < G.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

}  // namespace kernel

/// One W·x term of a linear combination.
struct LinearTerm {
  const Matrix* weight;
  std::span<const double> input;
};

/// Sum of W_i x_i plus an optional k×1 bias, accumulated in term order.
inline Vector linear_forward(std::span<const LinearTerm> terms, const Matrix* bias) {
  if (terms.empty()) throw ShapeError("linear: no terms");
  const std::size_t rows = terms.front().weight->rows();
  Vector out(rows, 0.0);
  for (const auto& t : terms) {
    if (t.weight->rows() != rows || t.weight->cols() != t.input.size()) {
      throw ShapeError("linear: weight " + shape_string(*t.weight) + " vs input dim " +
                       std::to_string(t.input.size()) + " (expected " + std::to_string(rows) +
                       " rows)");
    }
    kernel::gemv_acc(*t.weight, t.input, out);
  }
  if (bias != nullptr) {
    if (bias->rows() != rows || bias->cols() != 1) {
      throw ShapeError("linear: bias " + shape_string(*bias) + " for " + std::to_string(rows) +
                       " outputs");
    }
    for (std::size_t r = 0; r < rows; ++r) out[r] += (*bias)(r, 0);
  }
  return out;
}

/// result[i] = sum_j W[i,j] x[j].
inline Vector affine(const Matrix& W, std::span<const double> x) {
  if (W.cols() != x.size()) {
    throw ShapeError("affine: W is " + shape_string(W) + " but x has dim " +
                     std::to_string(x.size()));
  }
  const LinearTerm term{&W, x};
  return linear_forward(std::span<const LinearTerm>(&term, 1), nullptr);
}

enum class Activation { sigmoid, tanh, relu };

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::tanh:
      return std::tanh(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
  }
  return x;
}

/// Derivative expressed through the activation's output y = activate(a, x).
inline double activation_derivative(Activation a, double y) {
  switch (a) {
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::relu:
      return y > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

inline Vector elementwise(Activation a, std::span<const double> v) {
  require_finite(v, "elementwise");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = activate(a, v[i]);
  return out;
}

/// Max-subtracted softmax; entries equal to kMaskSentinel map to exactly 0.
inline Vector softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax: empty vector");
  require_finite(v, "softmax");
  double mx = kMaskSentinel;
  bool any_active = false;
  for (double x : v) {
    if (x == kMaskSentinel) continue;
    mx = any_active ? std::max(mx, x) : x;
    any_active = true;
  }
  if (!any_active) throw ShapeError("softmax: every entry is masked");
  Vector out(v.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == kMaskSentinel) continue;
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

/// Central differences (f(θ+h e_i) − f(θ−h e_i)) / 2h per coordinate.
inline Vector finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
  Vector probe(theta.begin(), theta.end());
  Vector grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_difference_gradient: non-finite f at coordinate " +
                           std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace tmn

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "../errors.hpp"
#include "../rng.hpp"

namespace muze::nn {

// Dense row-major matrix. Row vectors are Mat with rows == 1.
template <class T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {}

  T& operator()(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
  T* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return d.size(); }
  bool empty() const { return d.empty(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(T v) { std::fill(d.begin(), d.end(), v); }

  static Mat zeros(int r, int c) { return Mat(r, c); }

  static Mat randn(int r, int c, Rng& rng, T stddev) {
    Mat m(r, c);
    for (auto& x : m.d) x = static_cast<T>(rng.normal()) * stddev;
    return m;
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  static Mat from_row(const std::vector<T>& v) {
    Mat m(1, static_cast<int>(v.size()));
    m.d = v;
    return m;
  }

  bool operator==(const Mat&) const = default;
};

using Matrix = Mat<float>;

namespace detail {
inline void shape_check(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("shape mismatch in ") + what);
}
}  // namespace detail

// C += A * B
template <class T>
void matmul_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  detail::shape_check(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "matmul");
  for (int i = 0; i < a.rows; ++i) {
    T* crow = c.row(i);
    const T* arow = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const T aik = arow[k];
      if (aik == T(0)) continue;
      const T* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows, b.cols);
  matmul_acc(c, a, b);
  return c;
}

// C += A * B^T
template <class T>
void matmul_nt_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  detail::shape_check(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "matmul_nt");
  for (int i = 0; i < a.rows; ++i) {
    const T* arow = a.row(i);
    T* crow = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const T* brow = b.row(j);
      double acc = 0;
      for (int k = 0; k < a.cols; ++k) acc += static_cast<double>(arow[k]) * brow[k];
      crow[j] += static_cast<T>(acc);
    }
  }
}

template <class T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows, b.rows);
  matmul_nt_acc(c, a, b);
  return c;
}

// C += A^T * B
template <class T>
void matmul_tn_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  detail::shape_check(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "matmul_tn");
  for (int k = 0; k < a.rows; ++k) {
    const T* arow = a.row(k);
    const T* brow = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const T aki = arow[i];
      if (aki == T(0)) continue;
      T* crow = c.row(i);
      for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

template <class T>
void add_inplace(Mat<T>& a, const Mat<T>& b) {
  detail::shape_check(a.same_shape(b), "add");
  for (size_t i = 0; i < a.size(); ++i) a.d[i] += b.d[i];
}

template <class T>
void axpy(Mat<T>& y, T alpha, const Mat<T>& x) {
  detail::shape_check(y.same_shape(x), "axpy");
  for (size_t i = 0; i < y.size(); ++i) y.d[i] += alpha * x.d[i];
}

template <class T>
double dot(const T* a, const T* b, int n) {
  double acc = 0;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <class T>
double norm2(const T* a, int n) {
  return std::sqrt(dot(a, a, n));
}

template <class T>
void softmax_rows_inplace(Mat<T>& m) {
  for (int i = 0; i < m.rows; ++i) {
    T* row = m.row(i);
    T mx = row[0];
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int j = 0; j < m.cols; ++j) {
      row[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)));
      sum += row[j];
    }
    const T inv = static_cast<T>(1.0 / sum);
    for (int j = 0; j < m.cols; ++j) row[j] *= inv;
  }
}

inline constexpr double kLayerNormEps = 1e-5;

// y = (x - mean) * rstd * gamma + beta, per row. xhat/rstd outputs feed the
// backward pass; pass nullptr when not needed.
template <class T>
Mat<T> layer_norm_forward(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta,
                          Mat<T>* xhat_out = nullptr, std::vector<T>* rstd_out = nullptr) {
  detail::shape_check(gamma.rows == 1 && gamma.cols == x.cols && beta.rows == 1 && beta.cols == x.cols,
                      "layer_norm");
  Mat<T> y(x.rows, x.cols);
  if (xhat_out) *xhat_out = Mat<T>(x.rows, x.cols);
  if (rstd_out) rstd_out->assign(static_cast<size_t>(x.rows), T(0));
  for (int i = 0; i < x.rows; ++i) {
    const T* xi = x.row(i);
    double mean = 0;
    for (int j = 0; j < x.cols; ++j) mean += xi[j];
    mean /= x.cols;
    double var = 0;
    for (int j = 0; j < x.cols; ++j) {
      const double dv = xi[j] - mean;
      var += dv * dv;
    }
    var /= x.cols;
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    T* yi = y.row(i);
    for (int j = 0; j < x.cols; ++j) {
      const T xh = static_cast<T>((xi[j] - mean) * rstd);
      if (xhat_out) (*xhat_out)(i, j) = xh;
      yi[j] = xh * gamma(0, j) + beta(0, j);
    }
    if (rstd_out) (*rstd_out)[static_cast<size_t>(i)] = static_cast<T>(rstd);
  }
  return y;
}

template <class T>
T gelu_scalar(T x) {
  const double k = 0.7978845608028654;  // sqrt(2/pi)
  const double u = k * (static_cast<double>(x) + 0.044715 * std::pow(static_cast<double>(x), 3));
  return static_cast<T>(0.5 * static_cast<double>(x) * (1.0 + std::tanh(u)));
}

template <class T>
T gelu_grad_scalar(T x) {
  const double k = 0.7978845608028654;
  const double xd = static_cast<double>(x);
  const double u = k * (xd + 0.044715 * xd * xd * xd);
  const double t = std::tanh(u);
  const double du = k * (1.0 + 3.0 * 0.044715 * xd * xd);
  return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
}

template <class T>
Mat<T> l2_normalize_rows(const Mat<T>& x) {
  Mat<T> y(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double n = norm2(x.row(i), x.cols);
    if (n < 1e-12) throw ZeroNormError("cannot normalize zero-norm row");
    const T inv = static_cast<T>(1.0 / n);
    for (int j = 0; j < x.cols; ++j) y(i, j) = x(i, j) * inv;
  }
  return y;
}

template <class T>
double cosine_similarity(const T* a, const T* b, int n) {
  const double na = norm2(a, n);
  const double nb = norm2(b, n);
  if (na < 1e-12 || nb < 1e-12) throw ZeroNormError("cosine of zero-norm vector");
  return dot(a, b, n) / (na * nb);
}

inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  detail::shape_check(a.size() == b.size(), "cosine_similarity");
  return cosine_similarity(a.data(), b.data(), static_cast<int>(a.size()));
}

}  // namespace muze::nn

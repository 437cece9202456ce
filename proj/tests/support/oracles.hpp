#pragma once

// Slow reference implementations the fast library code is checked against.
// Everything here favors obviousness over speed: dense solves, quadruple
// loops, 64-bit accumulation.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "tsad/matrix.hpp"

namespace oracle {

// Dense (I + 2*alpha*D^T D) tau = x via Gaussian elimination with partial
// pivoting, D the (n-2) x n second-difference operator.
inline std::vector<double> hp_dense(const std::vector<double>& x, double alpha) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  for (std::size_t r = 0; r + 2 < n; ++r) {
    double row[3] = {1.0, -2.0, 1.0};
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) a[r + p][r + q] += 2.0 * alpha * row[p] * row[q];
  }
  std::vector<double> b = x;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    if (a[col][col] == 0.0) throw std::runtime_error("singular dense system");
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> tau(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * tau[c];
    tau[i] = s / a[i][i];
  }
  return tau;
}

// Least-squares line fit, the alpha -> infinity limit of the trend.
inline std::vector<double> ls_line(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double st = 0, sx = 0, stt = 0, stx = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    double td = static_cast<double>(t);
    st += td;
    sx += x[t];
    stt += td * td;
    stx += td * x[t];
  }
  double denom = n * stt - st * st;
  double slope = (n * stx - st * sx) / denom;
  double intercept = (sx - slope * st) / n;
  std::vector<double> line(x.size());
  for (std::size_t t = 0; t < x.size(); ++t)
    line[t] = intercept + slope * static_cast<double>(t);
  return line;
}

template <typename S>
tsad::Matrix<S> matmul_naive(const tsad::Matrix<S>& a, const tsad::Matrix<S>& b,
                             bool trans_a = false, bool trans_b = false) {
  std::size_t m = trans_a ? a.cols : a.rows;
  std::size_t k = trans_a ? a.rows : a.cols;
  std::size_t n = trans_b ? b.rows : b.cols;
  tsad::Matrix<S> out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      S s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        S av = trans_a ? a(p, i) : a(i, p);
        S bv = trans_b ? b(j, p) : b(p, j);
        s += av * bv;
      }
      out(i, j) = s;
    }
  return out;
}

// Width-3 circular convolution over the row axis; kernel rows are the three
// taps (offsets -1, 0, +1) stacked feature-major.
template <typename S>
tsad::Matrix<S> conv3_circular_naive(const tsad::Matrix<S>& in, const tsad::Matrix<S>& kernel) {
  std::size_t t_len = in.rows, f_len = in.cols, m_len = kernel.cols;
  tsad::Matrix<S> out(t_len, m_len);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t m = 0; m < m_len; ++m) {
      S s = 0;
      for (int k = 0; k < 3; ++k) {
        std::size_t src = (t + static_cast<std::size_t>(k) + t_len - 1) % t_len;
        for (std::size_t f = 0; f < f_len; ++f)
          s += in(src, f) * kernel(static_cast<std::size_t>(k) * f_len + f, m);
      }
      out(t, m) = s;
    }
  return out;
}

template <typename S>
tsad::Matrix<S> softmax_rows_naive(const tsad::Matrix<S>& m) {
  tsad::Matrix<S> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    S mx = m(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    S denom = 0;
    for (std::size_t j = 0; j < m.cols; ++j) denom += std::exp(m(i, j) - mx);
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = std::exp(m(i, j) - mx) / denom;
  }
  return out;
}

// KL(p || q) over one row pair with clamped logs, accumulated in double.
inline double kl_row_ref(const std::vector<double>& p, const std::vector<double>& q,
                         double eps = 1e-8) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += p[i] * (std::log(std::max(p[i], eps)) - std::log(std::max(q[i], eps)));
  return s;
}

template <typename S>
bool rows_stochastic(const tsad::Matrix<S>& m, double tol = 1e-5) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (m(i, j) < -1e-9) return false;
      sum += static_cast<double>(m(i, j));
    }
    if (std::fabs(sum - 1.0) > tol) return false;
  }
  return true;
}

template <typename S>
tsad::Matrix<S> random_matrix(std::mt19937& gen, std::size_t rows, std::size_t cols,
                              double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  tsad::Matrix<S> m(rows, cols);
  for (auto& v : m.data) v = static_cast<S>(dist(gen));
  return m;
}

inline std::vector<double> random_vector(std::mt19937& gen, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

}  // namespace oracle

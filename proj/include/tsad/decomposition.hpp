#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tsad/errors.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

struct DecomposedWindow {
  double alpha = 0.0;
  Matrix<double> trend;
  Matrix<double> cyclical;
};

namespace detail {

// Pentadiagonal band of A = I + 2*alpha*D'D, D the (W-2)xW second difference.
struct HpBand {
  std::vector<double> diag;  // W
  std::vector<double> off1;  // W-1
  std::vector<double> off2;  // W-2
};

inline HpBand hp_band(std::size_t n, double alpha) {
  HpBand b;
  b.diag.assign(n, 0.0);
  b.off1.assign(n - 1, 0.0);
  b.off2.assign(n - 2, 0.0);
  for (std::size_t r = 0; r + 2 < n; ++r) {
    b.diag[r] += 1.0;
    b.diag[r + 1] += 4.0;
    b.diag[r + 2] += 1.0;
    b.off1[r] += -2.0;
    b.off1[r + 1] += -2.0;
    b.off2[r] += 1.0;
  }
  double c = 2.0 * alpha;
  for (auto& v : b.diag) v = 1.0 + c * v;
  for (auto& v : b.off1) v *= c;
  for (auto& v : b.off2) v *= c;
  return b;
}

// Cholesky factors of the band: L has unit bandwidth 2.
struct HpFactor {
  std::vector<double> ld;  // L[i][i]
  std::vector<double> l1;  // L[i][i-1], index i
  std::vector<double> l2;  // L[i][i-2], index i
};

inline HpFactor hp_cholesky(const HpBand& b) {
  std::size_t n = b.diag.size();
  HpFactor f;
  f.ld.assign(n, 0.0);
  f.l1.assign(n, 0.0);
  f.l2.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 2) f.l2[i] = b.off2[i - 2] / f.ld[i - 2];
    if (i >= 1) f.l1[i] = (b.off1[i - 1] - f.l2[i] * f.l1[i - 1]) / f.ld[i - 1];
    double s = b.diag[i] - f.l1[i] * f.l1[i] - f.l2[i] * f.l2[i];
    if (s <= 0.0) throw NumericError("hp system lost positive definiteness");
    f.ld[i] = std::sqrt(s);
  }
  return f;
}

inline void hp_solve_factored(const HpFactor& f, const std::vector<double>& rhs,
                              std::vector<double>& out) {
  std::size_t n = rhs.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    if (i >= 1) s -= f.l1[i] * y[i - 1];
    if (i >= 2) s -= f.l2[i] * y[i - 2];
    y[i] = s / f.ld[i];
  }
  out.assign(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    if (ii + 1 < n) s -= f.l1[ii + 1] * out[ii + 1];
    if (ii + 2 < n) s -= f.l2[ii + 2] * out[ii + 2];
    out[ii] = s / f.ld[ii];
  }
}

inline void hp_band_multiply(const HpBand& b, const std::vector<double>& x,
                             std::vector<double>& out) {
  std::size_t n = x.size();
  out.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b.diag[i] * x[i];
    if (i >= 1) s += b.off1[i - 1] * x[i - 1];
    if (i + 1 < n) s += b.off1[i] * x[i + 1];
    if (i >= 2) s += b.off2[i - 2] * x[i - 2];
    if (i + 2 < n) s += b.off2[i] * x[i + 2];
    out[i] = s;
  }
}

}  // namespace detail

// Trend component: solves (I + 2*alpha*D'D) tau = x by banded Cholesky, O(W).
// One iterative refinement pass keeps the extreme-alpha limits tight.
inline std::vector<double> hp_filter(const std::vector<double>& x, double alpha) {
  if (x.size() < 3) throw ConfigError("hp filter needs a window of at least 3");
  if (alpha <= 0.0) throw ConfigError("hp filter alpha must be positive");
  auto band = detail::hp_band(x.size(), alpha);
  auto factor = detail::hp_cholesky(band);
  std::vector<double> tau;
  detail::hp_solve_factored(factor, x, tau);
  std::vector<double> ax, residual(x.size()), correction;
  detail::hp_band_multiply(band, tau, ax);
  for (std::size_t i = 0; i < x.size(); ++i) residual[i] = x[i] - ax[i];
  detail::hp_solve_factored(factor, residual, correction);
  for (std::size_t i = 0; i < x.size(); ++i) tau[i] += correction[i];
  return tau;
}

// Column-wise decomposition; cyclical = window - trend, so additivity is exact
// up to double rounding.
inline DecomposedWindow decompose_window(const Matrix<double>& window, double alpha) {
  if (window.rows < 3) throw ConfigError("decomposition needs a window of at least 3");
  DecomposedWindow dw;
  dw.alpha = alpha;
  dw.trend = Matrix<double>(window.rows, window.cols);
  dw.cyclical = Matrix<double>(window.rows, window.cols);
  std::vector<double> col(window.rows);
  for (std::size_t j = 0; j < window.cols; ++j) {
    for (std::size_t t = 0; t < window.rows; ++t) col[t] = window(t, j);
    auto tau = hp_filter(col, alpha);
    for (std::size_t t = 0; t < window.rows; ++t) {
      dw.trend(t, j) = tau[t];
      dw.cyclical(t, j) = window(t, j) - tau[t];
    }
  }
  return dw;
}

}  // namespace tsad

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "tsad/data_io.hpp"
#include "tsad/encoder.hpp"
#include "tsad/errors.hpp"
#include "tsad/loss.hpp"
#include "tsad/train.hpp"

namespace tsad {

namespace detail {

inline double kl_row(const double* p, const double* q, std::size_t n, double eps) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    s += p[j] * (std::log(std::max(p[j], eps)) - std::log(std::max(q[j], eps)));
  return s;
}

}  // namespace detail

// Per-timestamp anomaly score: mean over view pairs and components of the
// symmetric row KL between the two expanded maps. Summing scores times
// (pairs * 2) recovers the plain double-KL total over all maps.
template <typename S>
std::vector<double> score_window(const ViewRepresentation<S>& rep, ViewPairing pairing,
                                 double eps = 1e-8) {
  std::size_t channels = rep.intra.size();
  std::vector<std::pair<const std::array<Matrix<S>, 2>*, const std::array<Matrix<S>, 2>*>> pairs;
  switch (pairing) {
    case ViewPairing::both:
      for (std::size_t c = 0; c < channels; ++c) pairs.push_back({&rep.intra[c], &rep.inter[c]});
      break;
    case ViewPairing::intra_only:
    case ViewPairing::inter_only: {
      if (channels < 2 || channels % 2 != 0)
        throw ConfigError("single-view pairing needs an even channel count >= 2, got " +
                          std::to_string(channels));
      const auto& maps = pairing == ViewPairing::intra_only ? rep.intra : rep.inter;
      for (std::size_t c = 0; c + 1 < channels; c += 2) pairs.push_back({&maps[c], &maps[c + 1]});
      break;
    }
  }

  std::size_t w = rep.window;
  std::vector<double> scores(w, 0.0);
  std::vector<double> prow(w), qrow(w);
  for (const auto& [first, second] : pairs)
    for (std::size_t comp = 0; comp < 2; ++comp) {
      const Matrix<S>& P = (*first)[comp];
      const Matrix<S>& Q = (*second)[comp];
      for (std::size_t t = 0; t < w; ++t) {
        for (std::size_t j = 0; j < w; ++j) {
          prow[j] = static_cast<double>(P(t, j));
          qrow[j] = static_cast<double>(Q(t, j));
        }
        scores[t] += detail::kl_row(prow.data(), qrow.data(), w, eps) +
                     detail::kl_row(qrow.data(), prow.data(), w, eps);
      }
    }
  double inv = 1.0 / static_cast<double>(pairs.size() * 2);
  for (double& s : scores) s *= inv;
  return scores;
}

// Scores a full series. Windows step by stride (default: the window length)
// plus a tail window anchored at T-W; where windows overlap, the latest one
// wins. Normalization and decomposition mirror training exactly.
template <typename S>
std::vector<double> score_series(const TimeSeriesDataset& test, const ModelState<S>& ms,
                                 const LossConfig& loss_cfg, std::size_t stride = 0,
                                 std::size_t threads = 1) {
  if (test.dim != ms.config.dim)
    throw DataError("checkpoint expects " + std::to_string(ms.config.dim) +
                    " variables, data has " + std::to_string(test.dim));
  TimeSeriesDataset normalized = normalize_input(test, ms);
  std::size_t step = stride == 0 ? ms.config.window : stride;
  WindowBatch batch = sliding_windows(normalized, ms.config.window, step, true);
  PatchConfig patches = ms.config.patch_config();

  std::vector<std::vector<double>> per_window(batch.count());
  detail::parallel_for(batch.count(), threads, [&](std::size_t i) {
    DecomposedWindow dw = prepare_window(batch.windows[i], ms);
    ViewRepresentation<S> rep = encode_window(dw, ms.params, patches);
    per_window[i] = score_window(rep, loss_cfg.pairing, loss_cfg.epsilon);
  });

  std::vector<double> scores(test.length, 0.0);
  for (std::size_t i = 0; i < batch.count(); ++i)
    for (std::size_t t = 0; t < ms.config.window; ++t)
      scores[batch.origins[i] + t] = per_window[i][t];
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("anomaly score became non-finite");
  return scores;
}

// (1-r) quantile with linear interpolation at position (1-r)*(n-1) over the
// ascending order statistics.
inline double threshold_from_ratio(const std::vector<double>& scores, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("anomaly ratio must lie in (0, 1)");
  if (scores.empty()) throw DataError("cannot derive a threshold from an empty score list");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  double pos = (1.0 - ratio) * static_cast<double>(sorted.size() - 1);
  std::size_t k = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(k);
  if (k + 1 >= sorted.size()) return sorted.back();
  return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

// Ties classify as anomalous: the rule is score >= threshold.
inline std::vector<int> classify(const std::vector<double>& scores, double threshold) {
  std::vector<int> pred(scores.size(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? 1 : 0;
  return pred;
}

// Segment fill: one hit anywhere inside a contiguous labeled anomaly marks
// the whole segment as detected. Points outside labeled segments pass through.
inline std::vector<int> point_adjust(const std::vector<int>& pred,
                                     const std::vector<int>& labels) {
  if (pred.size() != labels.size())
    throw DataError("prediction and label lengths differ (" + std::to_string(pred.size()) +
                    " vs " + std::to_string(labels.size()) + ")");
  std::vector<int> out = pred;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == 1) {
      std::size_t j = i;
      while (j < labels.size() && labels[j] == 1) ++j;
      bool hit = false;
      for (std::size_t t = i; t < j; ++t)
        if (pred[t] == 1) hit = true;
      if (hit)
        for (std::size_t t = i; t < j; ++t) out[t] = 1;
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Zero denominators yield zero, never NaN.
inline MetricsReport compute_metrics(const std::vector<int>& pred,
                                     const std::vector<int>& labels) {
  if (pred.size() != labels.size())
    throw DataError("prediction and label lengths differ (" + std::to_string(pred.size()) +
                    " vs " + std::to_string(labels.size()) + ")");
  MetricsReport r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && labels[i] == 1) ++r.tp;
    else if (pred[i] == 1 && labels[i] == 0) ++r.fp;
    else if (pred[i] == 0 && labels[i] == 1) ++r.fn;
    else ++r.tn;
  }
  r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = (r.precision + r.recall > 0.0)
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// Rank-based (Mann-Whitney) AUC with average ranks on ties.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("score and label lengths differ (" + std::to_string(scores.size()) + " vs " +
                    std::to_string(labels.size()) + ")");
  std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
    i = j;
  }
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      pos_rank_sum += rank[k];
      ++pos;
    }
  std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DataError("roc-auc needs both classes present");
  double u = pos_rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace tsad

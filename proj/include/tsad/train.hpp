#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "tsad/data_io.hpp"
#include "tsad/decomposition.hpp"
#include "tsad/encoder.hpp"
#include "tsad/errors.hpp"
#include "tsad/loss.hpp"
#include "tsad/patching.hpp"

namespace tsad {

enum class NormMode { raw, none, per_component };

struct ModelConfig {
  std::size_t window = 90;
  std::vector<std::size_t> patch_sizes{3, 5};
  std::size_t dim = 0;  // variable count, fixed when training starts
  EncoderConfig enc;
  double alpha = 6400.0;
  NormMode norm = NormMode::raw;

  PatchConfig patch_config() const { return {window, patch_sizes}; }
};

inline void validate_model_config(const ModelConfig& cfg) {
  validate_patch_config(cfg.patch_config());
  validate_encoder_config(cfg.enc);
  if (cfg.alpha <= 0.0) throw ConfigError("alpha must be positive");
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  std::vector<Matrix<S>> m, v;
  std::uint64_t step = 0;
};

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch = 32;
  std::size_t stride = 0;  // 0 -> window (non-overlapping)
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  AdamConfig adam;
  LossConfig loss;
};

template <typename S>
struct ModelState {
  ModelConfig config;
  EncoderParams<S> params;
  NormalizerStats input_norm;
  NormalizerStats trend_norm, cyclical_norm;  // per-component mode only
  AdamState<S> opt;
};

template <typename S>
std::vector<Matrix<S>*> parameter_ptrs(EncoderParams<S>& p) {
  std::vector<Matrix<S>*> out;
  for_each_parameter(p, [&](const std::string&, Matrix<S>& m) { out.push_back(&m); });
  return out;
}

template <typename S>
ModelState<S> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  ModelState<S> ms;
  ms.config = cfg;
  ms.params = init_encoder<S>(cfg.enc, cfg.patch_config(), seed);
  for_each_parameter(ms.params, [&](const std::string&, Matrix<S>& m) {
    ms.opt.m.emplace_back(m.rows, m.cols);
    ms.opt.v.emplace_back(m.rows, m.cols);
  });
  return ms;
}

// Bias-corrected update theta -= lr * mhat / (sqrt(vhat) + eps). With fresh
// moments this is exactly lr*g/(|g|+eps) per entry.
template <typename S>
void adam_step(std::vector<Matrix<S>*> params, const std::vector<Matrix<S>>& grads,
               AdamState<S>& st, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw ConfigError("optimizer state does not match the parameter registry");
  st.step += 1;
  S b1 = static_cast<S>(cfg.beta1);
  S b2 = static_cast<S>(cfg.beta2);
  S bc1 = static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(st.step)));
  S bc2 = static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(st.step)));
  S lr = static_cast<S>(cfg.lr);
  S eps = static_cast<S>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix<S>& th = *params[i];
    const Matrix<S>& g = grads[i];
    Matrix<S>& m = st.m[i];
    Matrix<S>& v = st.v[i];
    for (std::size_t k = 0; k < th.data.size(); ++k) {
      m.data[k] = b1 * m.data[k] + (S(1) - b1) * g.data[k];
      v.data[k] = b2 * v.data[k] + (S(1) - b2) * g.data[k] * g.data[k];
      S mhat = m.data[k] / bc1;
      S vhat = v.data[k] / bc2;
      th.data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Decomposes one window and, in per-component mode, z-scores the two
// components with the train-fitted statistics.
template <typename S>
DecomposedWindow prepare_window(const Matrix<double>& window, const ModelState<S>& ms) {
  DecomposedWindow dw = decompose_window(window, ms.config.alpha);
  if (ms.config.norm == NormMode::per_component) {
    for (std::size_t j = 0; j < dw.trend.cols; ++j)
      for (std::size_t t = 0; t < dw.trend.rows; ++t) {
        dw.trend(t, j) = (dw.trend(t, j) - ms.trend_norm.mean[j]) / ms.trend_norm.stddev[j];
        dw.cyclical(t, j) =
            (dw.cyclical(t, j) - ms.cyclical_norm.mean[j]) / ms.cyclical_norm.stddev[j];
      }
  }
  return dw;
}

template <typename S>
TimeSeriesDataset normalize_input(const TimeSeriesDataset& ds, const ModelState<S>& ms) {
  if (ms.config.norm == NormMode::raw) return apply_normalizer(ds, ms.input_norm);
  return ds;
}

template <typename S>
struct WindowGradients {
  std::vector<Matrix<S>> grads;  // registry order
  double loss_total = 0.0;
  double loss_intra = 0.0;
  double loss_inter = 0.0;
  std::size_t pair_count = 0;
};

namespace detail {

template <typename S>
std::vector<Matrix<S>> collect_parameter_gradients(const Graph<S>& g, const EncoderNodeIds& ids) {
  std::vector<Matrix<S>> out;
  for (const auto& ch : ids.channels) {
    out.push_back(g.gradient(ch.intra));
    out.push_back(g.gradient(ch.inter));
  }
  for (const auto& layer : ids.layers)
    for (const auto& qk : layer) {
      out.push_back(g.gradient(qk.w_q));
      out.push_back(g.gradient(qk.w_k));
    }
  return out;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < threads; ++k)
    pool.emplace_back([&] {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

template <typename S>
WindowGradients<S> window_gradients(const EncoderParams<S>& params, const PatchConfig& patches,
                                    const DecomposedWindow& dw, const LossConfig& loss_cfg) {
  Graph<S> g;
  EncoderNodeIds ids = bind_encoder(g, params);
  EncodedWindow ew = encode_into(g, ids, dw, patches, params.cfg);
  LossNodes<S> loss = build_loss(g, ew, loss_cfg);
  g.forward();
  g.backward(loss.total);
  WindowGradients<S> out;
  out.grads = detail::collect_parameter_gradients(g, ids);
  out.loss_total = static_cast<double>(g.value(loss.total)(0, 0));
  out.loss_intra = static_cast<double>(g.value(loss.intra)(0, 0));
  out.loss_inter = static_cast<double>(g.value(loss.inter)(0, 0));
  out.pair_count = loss.pair_count;
  return out;
}

struct TrainHistory {
  std::vector<double> mean_loss_intra;  // per epoch, normalized by pair count
};

// Minibatch descent over non-overlapping training windows. Per-window
// gradients go to private buffers and are reduced in window order, so the
// result does not depend on the thread count.
template <typename S>
TrainHistory train_model(ModelState<S>& ms, const TimeSeriesDataset& train,
                         const TrainConfig& cfg) {
  validate_model_config(ms.config);
  if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (cfg.batch == 0) throw ConfigError("batch must be positive");
  if (ms.config.dim == 0) ms.config.dim = train.dim;
  if (ms.config.dim != train.dim)
    throw DataError("model expects " + std::to_string(ms.config.dim) + " variables, data has " +
                    std::to_string(train.dim));

  ms.input_norm = fit_normalizer(train);
  TimeSeriesDataset normalized = normalize_input(train, ms);
  std::size_t stride = cfg.stride == 0 ? ms.config.window : cfg.stride;
  WindowBatch batch = sliding_windows(normalized, ms.config.window, stride, false);

  // Decomposition does not depend on the parameters; cache it across epochs.
  std::vector<DecomposedWindow> decomposed(batch.count());
  detail::parallel_for(batch.count(), cfg.threads, [&](std::size_t i) {
    decomposed[i] = decompose_window(batch.windows[i], ms.config.alpha);
  });

  if (ms.config.norm == NormMode::per_component) {
    auto fit_component = [&](bool trend) {
      NormalizerStats st;
      st.mean.assign(train.dim, 0.0);
      st.stddev.assign(train.dim, 0.0);
      double samples = static_cast<double>(batch.count() * ms.config.window);
      for (const auto& dw : decomposed) {
        const Matrix<double>& m = trend ? dw.trend : dw.cyclical;
        for (std::size_t t = 0; t < m.rows; ++t)
          for (std::size_t j = 0; j < m.cols; ++j) st.mean[j] += m(t, j);
      }
      for (auto& v : st.mean) v /= samples;
      for (const auto& dw : decomposed) {
        const Matrix<double>& m = trend ? dw.trend : dw.cyclical;
        for (std::size_t t = 0; t < m.rows; ++t)
          for (std::size_t j = 0; j < m.cols; ++j) {
            double c = m(t, j) - st.mean[j];
            st.stddev[j] += c * c;
          }
      }
      for (auto& v : st.stddev) v = std::max(std::sqrt(v / samples), 1e-8);
      return st;
    };
    ms.trend_norm = fit_component(true);
    ms.cyclical_norm = fit_component(false);
    for (auto& dw : decomposed) {
      for (std::size_t j = 0; j < dw.trend.cols; ++j)
        for (std::size_t t = 0; t < dw.trend.rows; ++t) {
          dw.trend(t, j) = (dw.trend(t, j) - ms.trend_norm.mean[j]) / ms.trend_norm.stddev[j];
          dw.cyclical(t, j) =
              (dw.cyclical(t, j) - ms.cyclical_norm.mean[j]) / ms.cyclical_norm.stddev[j];
        }
    }
  }

  PatchConfig patches = ms.config.patch_config();
  auto param_ptrs = parameter_ptrs(ms.params);
  std::mt19937 order_gen(static_cast<std::uint32_t>(cfg.seed) + 1u);
  std::vector<std::size_t> order(batch.count());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_gen);
    double epoch_intra = 0.0;
    std::size_t epoch_windows = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::size_t len = std::min(cfg.batch, order.size() - start);
      std::vector<WindowGradients<S>> results(len);
      detail::parallel_for(len, cfg.threads, [&](std::size_t i) {
        results[i] =
            window_gradients(ms.params, patches, decomposed[order[start + i]], cfg.loss);
      });
      std::vector<Matrix<S>> mean_grads;
      for (const Matrix<S>* p : param_ptrs) mean_grads.emplace_back(p->rows, p->cols);
      double batch_total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t k = 0; k < mean_grads.size(); ++k)
          for (std::size_t e = 0; e < mean_grads[k].data.size(); ++e)
            mean_grads[k].data[e] += results[i].grads[k].data[e];
        batch_total += results[i].loss_total;
        epoch_intra += results[i].loss_intra / static_cast<double>(results[i].pair_count);
      }
      S inv = static_cast<S>(1.0 / static_cast<double>(len));
      for (auto& gmat : mean_grads)
        for (auto& v : gmat.data) v *= inv;
      if (!std::isfinite(batch_total))
        throw NumericError("loss became non-finite at epoch " + std::to_string(epoch + 1));
      adam_step(param_ptrs, mean_grads, ms.opt, cfg.adam);
      epoch_windows += len;
    }
    history.mean_loss_intra.push_back(epoch_intra / static_cast<double>(epoch_windows));
  }
  return history;
}

}  // namespace tsad

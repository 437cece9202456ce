#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "tsad/errors.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

static_assert(std::endian::native == std::endian::little,
              "raw .f32 format assumes a little-endian host");

struct TimeSeriesDataset {
  std::vector<std::string> channel_names;
  std::vector<double> values;  // row-major, length*dim
  std::vector<int> labels;     // empty, or one 0/1 per timestamp
  std::size_t length = 0;
  std::size_t dim = 0;

  bool has_labels() const { return !labels.empty(); }
  double at(std::size_t t, std::size_t j) const { return values[t * dim + j]; }
  double& at(std::size_t t, std::size_t j) { return values[t * dim + j]; }
};

struct NormalizerStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored, safe to divide by
  std::size_t dim() const { return mean.size(); }
};

struct WindowBatch {
  std::size_t window = 0;
  std::vector<std::size_t> origins;
  std::vector<Matrix<double>> windows;  // each window x dim
  std::size_t count() const { return windows.size(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

inline bool parse_double(const std::string& raw, double& out) {
  std::string cell = trim(raw);
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

// CSV layout: one header line, one row per timestamp, optional trailing
// integer column named "label".
inline TimeSeriesDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  if (header.empty() || (header.size() == 1 && header[0].empty()))
    throw DataError("missing header in " + path);

  bool labeled = header.back() == "label";
  std::size_t dim = header.size() - (labeled ? 1 : 0);
  if (dim == 0) throw DataError("no value columns in " + path);

  TimeSeriesDataset ds;
  ds.dim = dim;
  ds.channel_names.assign(header.begin(), header.begin() + dim);

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("ragged row (row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()) + ") in " + path);
    for (std::size_t c = 0; c < dim; ++c) {
      double v;
      if (!detail::parse_double(cells[c], v))
        throw DataError("non-numeric cell at row " + std::to_string(row) + ", col " +
                        std::to_string(c + 1) + " in " + path);
      if (!std::isfinite(v))
        throw DataError("non-finite value at row " + std::to_string(row) + ", col " +
                        std::to_string(c + 1) + " in " + path);
      ds.values.push_back(v);
    }
    if (labeled) {
      double v;
      if (!detail::parse_double(cells[dim], v) || (v != 0.0 && v != 1.0))
        throw DataError("label not in {0,1} at row " + std::to_string(row) + " in " + path);
      ds.labels.push_back(static_cast<int>(v));
    }
  }
  ds.length = row;
  if (ds.length == 0) throw DataError("no data rows in " + path);
  return ds;
}

inline void save_csv(const TimeSeriesDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t j = 0; j < ds.dim; ++j) {
    if (j) out << ',';
    out << (j < ds.channel_names.size() ? ds.channel_names[j] : "v" + std::to_string(j));
  }
  if (ds.has_labels()) out << ",label";
  out << '\n';
  for (std::size_t t = 0; t < ds.length; ++t) {
    for (std::size_t j = 0; j < ds.dim; ++j) {
      if (j) out << ',';
      out << detail::format_double(ds.at(t, j));
    }
    if (ds.has_labels()) out << ',' << ds.labels[t];
    out << '\n';
  }
}

// Raw format: float32 little-endian, row-major, described by a JSON sidecar
// {"T":..., "d":..., "data": "x.f32", "labels": "x.labels"}. "data" defaults to
// the sidecar path with a .f32 extension; paths resolve relative to the sidecar.
// The label file holds one 0/1 per line, T lines.
inline TimeSeriesDataset load_raw(const std::string& sidecar_path) {
  std::ifstream meta_in(sidecar_path);
  if (!meta_in) throw DataError("cannot open " + sidecar_path);
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad sidecar " + sidecar_path + ": " + e.what());
  }
  if (!meta.contains("T") || !meta.contains("d"))
    throw DataError("sidecar " + sidecar_path + " must define T and d");
  std::size_t T = meta["T"].get<std::size_t>();
  std::size_t d = meta["d"].get<std::size_t>();
  if (T == 0 || d == 0) throw DataError("sidecar " + sidecar_path + " has empty shape");

  namespace fs = std::filesystem;
  fs::path base = fs::path(sidecar_path).parent_path();
  fs::path data_path = meta.contains("data")
                           ? base / meta["data"].get<std::string>()
                           : fs::path(sidecar_path).replace_extension(".f32");

  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + data_path.string());
  in.seekg(0, std::ios::end);
  std::size_t bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != T * d * sizeof(float))
    throw DataError(data_path.string() + " holds " + std::to_string(bytes) +
                    " bytes, expected " + std::to_string(T * d * sizeof(float)));
  in.seekg(0);
  std::vector<float> buf(T * d);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw DataError("short read from " + data_path.string());

  TimeSeriesDataset ds;
  ds.length = T;
  ds.dim = d;
  ds.values.assign(buf.begin(), buf.end());
  for (std::size_t j = 0; j < d; ++j) ds.channel_names.push_back("v" + std::to_string(j));

  if (meta.contains("labels")) {
    fs::path label_path = base / meta["labels"].get<std::string>();
    std::ifstream lin(label_path);
    if (!lin) throw DataError("cannot open " + label_path.string());
    std::string line;
    while (std::getline(lin, line)) {
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line != "0" && line != "1")
        throw DataError("label not in {0,1} in " + label_path.string());
      ds.labels.push_back(line == "1" ? 1 : 0);
    }
    if (ds.labels.size() != T)
      throw DataError(label_path.string() + " holds " + std::to_string(ds.labels.size()) +
                      " labels, expected " + std::to_string(T));
  }
  return ds;
}

inline void save_raw(const TimeSeriesDataset& ds, const std::string& f32_path,
                     const std::string& sidecar_path) {
  {
    std::ofstream out(f32_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + f32_path);
    std::vector<float> buf(ds.values.begin(), ds.values.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  namespace fs = std::filesystem;
  nlohmann::json meta;
  meta["T"] = ds.length;
  meta["d"] = ds.dim;
  meta["data"] = fs::path(f32_path).filename().string();
  if (ds.has_labels()) {
    fs::path label_path = fs::path(f32_path).replace_extension(".labels");
    std::ofstream lout(label_path);
    for (int v : ds.labels) lout << v << '\n';
    meta["labels"] = label_path.filename().string();
  }
  std::ofstream mout(sidecar_path);
  if (!mout) throw DataError("cannot write " + sidecar_path);
  mout << meta.dump(2) << '\n';
}

// Per-variable z-score statistics, population std, floored so constant
// columns normalize to zero instead of dividing by zero.
inline NormalizerStats fit_normalizer(const TimeSeriesDataset& ds) {
  NormalizerStats st;
  st.mean.resize(ds.dim, 0.0);
  st.stddev.resize(ds.dim, 0.0);
  for (std::size_t t = 0; t < ds.length; ++t)
    for (std::size_t j = 0; j < ds.dim; ++j) st.mean[j] += ds.at(t, j);
  for (std::size_t j = 0; j < ds.dim; ++j) st.mean[j] /= static_cast<double>(ds.length);
  for (std::size_t t = 0; t < ds.length; ++t)
    for (std::size_t j = 0; j < ds.dim; ++j) {
      double c = ds.at(t, j) - st.mean[j];
      st.stddev[j] += c * c;
    }
  for (std::size_t j = 0; j < ds.dim; ++j)
    st.stddev[j] = std::max(std::sqrt(st.stddev[j] / static_cast<double>(ds.length)), 1e-8);
  return st;
}

inline TimeSeriesDataset apply_normalizer(const TimeSeriesDataset& ds,
                                          const NormalizerStats& st) {
  if (st.dim() != ds.dim)
    throw DataError("normalizer fitted on " + std::to_string(st.dim()) +
                    " variables, data has " + std::to_string(ds.dim));
  TimeSeriesDataset out = ds;
  for (std::size_t t = 0; t < ds.length; ++t)
    for (std::size_t j = 0; j < ds.dim; ++j)
      out.at(t, j) = (ds.at(t, j) - st.mean[j]) / st.stddev[j];
  return out;
}

// Origins step by stride; with cover_tail an extra window anchored at T-W is
// appended when the regular grid leaves trailing timestamps uncovered.
inline WindowBatch sliding_windows(const TimeSeriesDataset& ds, std::size_t window,
                                   std::size_t stride, bool cover_tail = false) {
  if (window == 0) throw ConfigError("window must be positive");
  if (stride == 0) throw ConfigError("stride must be positive");
  if (window > ds.length)
    throw DataError("window " + std::to_string(window) + " exceeds series length " +
                    std::to_string(ds.length));
  WindowBatch batch;
  batch.window = window;
  std::size_t count = (ds.length - window) / stride + 1;
  for (std::size_t b = 0; b < count; ++b) batch.origins.push_back(b * stride);
  if (cover_tail && batch.origins.back() != ds.length - window)
    batch.origins.push_back(ds.length - window);
  for (std::size_t origin : batch.origins) {
    Matrix<double> w(window, ds.dim);
    for (std::size_t t = 0; t < window; ++t)
      for (std::size_t j = 0; j < ds.dim; ++j) w(t, j) = ds.at(origin + t, j);
    batch.windows.push_back(std::move(w));
  }
  return batch;
}

enum class AnomalyKind { spike, level_shift, frequency_change };

inline const char* anomaly_kind_name(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::spike: return "spike";
    case AnomalyKind::level_shift: return "level-shift";
    default: return "frequency-change";
  }
}

struct SynthConfig {
  std::size_t length = 2000;
  std::size_t dim = 3;
  std::uint64_t seed = 0;
  std::vector<AnomalyKind> kinds;  // empty -> clean series, all labels 0
  double rate = 0.05;              // target labeled fraction
  double noise_sigma = 0.1;
};

struct InjectedAnomaly {
  AnomalyKind kind;
  std::size_t start = 0;
  std::size_t length = 0;
};

struct SynthResult {
  TimeSeriesDataset data;
  std::vector<InjectedAnomaly> events;
};

// Two sinusoids plus Gaussian noise; anomalies hit every channel at once and
// are labeled over their full span.
inline SynthResult synthesize(const SynthConfig& cfg) {
  if (cfg.length < 200) throw ConfigError("synthetic series needs length >= 200");
  if (cfg.dim == 0) throw ConfigError("synthetic series needs dim >= 1");
  if (!cfg.kinds.empty() && (cfg.rate < 0.01 || cfg.rate > 0.15))
    throw ConfigError("anomaly rate must lie in [0.01, 0.15]");

  std::mt19937 gen(static_cast<std::uint32_t>(cfg.seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);

  const std::size_t T = cfg.length;
  const std::size_t d = cfg.dim;
  const double two_pi = 6.283185307179586;
  const double p1 = static_cast<double>(T) / 8.0;
  const double p2 = static_cast<double>(T) / 23.0;

  std::vector<double> phi1(d), phi2(d);
  for (std::size_t j = 0; j < d; ++j) phi1[j] = two_pi * unit(gen);
  for (std::size_t j = 0; j < d; ++j) phi2[j] = two_pi * unit(gen);

  SynthResult res;
  TimeSeriesDataset& ds = res.data;
  ds.length = T;
  ds.dim = d;
  ds.values.resize(T * d);
  ds.labels.assign(T, 0);
  for (std::size_t j = 0; j < d; ++j) ds.channel_names.push_back("v" + std::to_string(j));

  auto clean_value = [&](std::size_t t, std::size_t j) {
    double x = static_cast<double>(t);
    return std::sin(two_pi * x / p1 + phi1[j]) + 0.5 * std::sin(two_pi * x / p2 + phi2[j]);
  };
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) ds.at(t, j) = clean_value(t, j) + noise(gen);

  if (cfg.kinds.empty()) return res;

  const std::size_t target = static_cast<std::size_t>(std::llround(cfg.rate * T));
  const std::size_t margin = 16;
  const std::size_t gap = 48;  // keeps events from sharing detection windows
  std::vector<std::pair<std::size_t, std::size_t>> taken;  // [start, end)
  std::size_t labeled = 0, kind_cursor = 0, attempts = 0;

  while (labeled < target && attempts < 10000) {
    ++attempts;
    AnomalyKind kind = cfg.kinds[kind_cursor % cfg.kinds.size()];
    std::size_t lo, hi;
    if (kind == AnomalyKind::spike) {
      lo = 6;
      hi = 12;
    } else {
      lo = std::max<std::size_t>(24, T / 100);
      hi = std::max<std::size_t>(lo + 1, T / 50);
    }
    std::size_t len = lo + static_cast<std::size_t>(unit(gen) * static_cast<double>(hi - lo));
    std::size_t remaining = target - labeled;
    len = std::min(len, std::max(lo, remaining));
    if (len + 2 * margin >= T) continue;
    std::size_t start =
        margin + static_cast<std::size_t>(unit(gen) * static_cast<double>(T - len - 2 * margin));
    bool overlaps = false;
    for (auto [s, e] : taken)
      if (start < e + gap && s < start + len + gap) overlaps = true;
    if (overlaps) continue;

    double sign = unit(gen) < 0.5 ? -1.0 : 1.0;
    switch (kind) {
      case AnomalyKind::spike: {
        // Alternating-sign burst rather than one isolated tick.
        for (std::size_t t = start; t < start + len; ++t) {
          double amp = 10.0 * cfg.noise_sigma * (1.0 + 0.2 * unit(gen));
          double flip = ((t - start) % 2 == 0) ? sign : -sign;
          for (std::size_t j = 0; j < d; ++j) ds.at(t, j) += flip * amp;
        }
        break;
      }
      case AnomalyKind::level_shift: {
        double shift = sign * 10.0 * cfg.noise_sigma;
        for (std::size_t t = start; t < start + len; ++t)
          for (std::size_t j = 0; j < d; ++j) ds.at(t, j) += shift;
        break;
      }
      case AnomalyKind::frequency_change: {
        for (std::size_t t = start; t < start + len; ++t)
          for (std::size_t j = 0; j < d; ++j) {
            double x = static_cast<double>(t);
            ds.at(t, j) = std::sin(two_pi * x * 3.0 / p1 + phi1[j]) +
                          0.5 * std::sin(two_pi * x / p2 + phi2[j]) + noise(gen);
          }
        break;
      }
    }
    for (std::size_t t = start; t < start + len; ++t) ds.labels[t] = 1;
    taken.emplace_back(start, start + len);
    res.events.push_back({kind, start, len});
    labeled += len;
    ++kind_cursor;
  }

  double frac = static_cast<double>(labeled) / static_cast<double>(T);
  if (frac < 0.01 || frac > 0.15)
    throw NumericError("injected anomaly fraction " + std::to_string(frac) +
                       " fell outside [0.01, 0.15]");
  return res;
}

}  // namespace tsad

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "tsad/errors.hpp"
#include "tsad/matrix.hpp"
#include "tsad/train.hpp"

namespace tsad {

// Container layout: "TSCK", u32 version, u64-length JSON config echo, u64
// tensor count, then per tensor: u64 name length + name, u64 rows, u64 cols,
// u8 scalar width, raw little-endian payload. Saving what load_checkpoint
// returns reproduces the file byte for byte.
inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint " + path);
  return v;
}

inline void write_str(std::ofstream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::ifstream& in, const std::string& path) {
  auto len = read_pod<std::uint64_t>(in, path);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint " + path);
  return s;
}

template <typename S>
void write_tensor(std::ofstream& out, const std::string& name, const Matrix<S>& m) {
  write_str(out, name);
  write_pod<std::uint64_t>(out, m.rows);
  write_pod<std::uint64_t>(out, m.cols);
  write_pod<std::uint8_t>(out, sizeof(S));
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(S)));
}

template <typename S>
Matrix<S> read_tensor_payload(std::ifstream& in, const std::string& path, std::uint64_t rows,
                              std::uint64_t cols) {
  Matrix<S> m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(S)));
  if (!in) throw DataError("truncated checkpoint " + path);
  return m;
}

inline Matrix<double> stats_to_matrix(const std::vector<double>& v) {
  Matrix<double> m(1, v.size());
  m.data = v;
  return m;
}

inline const char* norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::raw: return "raw";
    case NormMode::none: return "none";
    case NormMode::per_component: return "per_component";
  }
  return "raw";
}

inline NormMode norm_mode_from(const std::string& s) {
  if (s == "raw") return NormMode::raw;
  if (s == "none") return NormMode::none;
  if (s == "per_component") return NormMode::per_component;
  throw DataError("unknown normalization mode '" + s + "' in checkpoint");
}

}  // namespace detail

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["window"] = cfg.window;
  j["patch_sizes"] = cfg.patch_sizes;
  j["dim"] = cfg.dim;
  j["d_model"] = cfg.enc.d_model;
  j["heads"] = cfg.enc.heads;
  j["layers"] = cfg.enc.layers;
  j["alpha"] = cfg.alpha;
  j["normalization"] = detail::norm_mode_name(cfg.norm);
  return j;
}

template <typename S>
void save_checkpoint(const std::string& path, const ModelState<S>& ms) {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kCheckpointMagic, 4);
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);

  nlohmann::json cfg = model_config_json(ms.config);
  cfg["scalar"] = std::is_same_v<S, float> ? "float32" : "float64";
  cfg["adam_step"] = ms.opt.step;
  detail::write_str(out, cfg.dump());

  std::vector<std::pair<std::string, const Matrix<S>*>> params;
  for_each_parameter(ms.params, [&](const std::string& name, const Matrix<S>& m) {
    params.emplace_back(name, &m);
  });

  std::uint64_t tensor_count = params.size() * 3 + 6;
  detail::write_pod<std::uint64_t>(out, tensor_count);
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::write_tensor(out, params[i].first, *params[i].second);
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::write_tensor(out, "opt.m." + params[i].first, ms.opt.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::write_tensor(out, "opt.v." + params[i].first, ms.opt.v[i]);
  detail::write_tensor(out, "norm.input.mean", detail::stats_to_matrix(ms.input_norm.mean));
  detail::write_tensor(out, "norm.input.std", detail::stats_to_matrix(ms.input_norm.stddev));
  detail::write_tensor(out, "norm.trend.mean", detail::stats_to_matrix(ms.trend_norm.mean));
  detail::write_tensor(out, "norm.trend.std", detail::stats_to_matrix(ms.trend_norm.stddev));
  detail::write_tensor(out, "norm.cyclical.mean",
                       detail::stats_to_matrix(ms.cyclical_norm.mean));
  detail::write_tensor(out, "norm.cyclical.std",
                       detail::stats_to_matrix(ms.cyclical_norm.stddev));
  if (!out) throw DataError("failed while writing " + path);
}

template <typename S>
ModelState<S> load_checkpoint(const std::string& path) {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError(path + " is not a checkpoint");
  auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(detail::read_str(in, path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint config in " + path + ": " + e.what());
  }
  std::string scalar = cfg.at("scalar").get<std::string>();
  std::string expected = std::is_same_v<S, float> ? "float32" : "float64";
  if (scalar != expected)
    throw DataError("checkpoint scalar " + scalar + " does not match expected " + expected);

  ModelState<S> ms;
  ms.config.window = cfg.at("window").get<std::size_t>();
  ms.config.patch_sizes = cfg.at("patch_sizes").get<std::vector<std::size_t>>();
  ms.config.dim = cfg.at("dim").get<std::size_t>();
  ms.config.enc.d_model = cfg.at("d_model").get<std::size_t>();
  ms.config.enc.heads = cfg.at("heads").get<std::size_t>();
  ms.config.enc.layers = cfg.at("layers").get<std::size_t>();
  ms.config.alpha = cfg.at("alpha").get<double>();
  ms.config.norm = detail::norm_mode_from(cfg.at("normalization").get<std::string>());
  validate_model_config(ms.config);

  auto count = detail::read_pod<std::uint64_t>(in, path);
  std::map<std::string, Matrix<S>> tensors;
  std::map<std::string, Matrix<double>> stat_tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = detail::read_str(in, path);
    auto rows = detail::read_pod<std::uint64_t>(in, path);
    auto cols = detail::read_pod<std::uint64_t>(in, path);
    auto width = detail::read_pod<std::uint8_t>(in, path);
    if (name.rfind("norm.", 0) == 0) {
      if (width != sizeof(double)) throw DataError("statistics tensors must be float64");
      stat_tensors[name] = detail::read_tensor_payload<double>(in, path, rows, cols);
    } else {
      if (width != sizeof(S)) throw DataError("tensor " + name + " has scalar width " +
                                              std::to_string(width) + ", expected " +
                                              std::to_string(sizeof(S)));
      tensors[name] = detail::read_tensor_payload<S>(in, path, rows, cols);
    }
  }

  ms.params = init_encoder<S>(ms.config.enc, ms.config.patch_config(), 0);
  auto take = [&](const std::string& name) -> Matrix<S> {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint misses tensor " + name);
    return it->second;
  };
  for_each_parameter(ms.params, [&](const std::string& name, Matrix<S>& m) {
    Matrix<S> loaded = take(name);
    if (!loaded.same_shape(m))
      throw DataError("tensor " + name + " has an unexpected shape in " + path);
    m = std::move(loaded);
  });
  ms.opt.m.clear();
  ms.opt.v.clear();
  for_each_parameter(ms.params, [&](const std::string& name, Matrix<S>& m) {
    Matrix<S> mm = take("opt.m." + name);
    Matrix<S> vv = take("opt.v." + name);
    if (!mm.same_shape(m) || !vv.same_shape(m))
      throw DataError("optimizer tensors for " + name + " have unexpected shapes");
    ms.opt.m.push_back(std::move(mm));
    ms.opt.v.push_back(std::move(vv));
  });
  ms.opt.step = cfg.at("adam_step").get<std::uint64_t>();

  auto stats = [&](const std::string& name) -> std::vector<double> {
    auto it = stat_tensors.find(name);
    if (it == stat_tensors.end()) throw DataError("checkpoint misses tensor " + name);
    return it->second.data;
  };
  ms.input_norm.mean = stats("norm.input.mean");
  ms.input_norm.stddev = stats("norm.input.std");
  ms.trend_norm.mean = stats("norm.trend.mean");
  ms.trend_norm.stddev = stats("norm.trend.std");
  ms.cyclical_norm.mean = stats("norm.cyclical.mean");
  ms.cyclical_norm.stddev = stats("norm.cyclical.std");
  return ms;
}

}  // namespace tsad

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsad/data_io.hpp"
#include "tsad/errors.hpp"
#include "tsad/loss.hpp"
#include "tsad/train.hpp"

namespace tsad {

// Union of every command's knobs, the flat key set of the JSON config file.
// Flags override file values; the merged result is echoed next to outputs.
struct RunConfig {
  std::string data;
  std::string test_data;
  std::string checkpoint;
  std::string scores;
  std::string labels;
  std::string out_dir = "out";

  std::size_t window = 90;
  std::vector<std::size_t> patch_sizes{3, 5};
  double alpha = 6400.0;
  std::size_t d_model = 128;
  std::size_t heads = 1;
  std::size_t layers = 2;
  std::string normalization = "raw";

  double lr = 1e-4;
  std::size_t batch = 32;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  std::size_t train_stride = 0;  // 0 -> window
  std::size_t score_stride = 0;
  std::size_t threads = 1;

  std::string loss_variant = "symmetric-kl";
  std::string pairing = "both";
  bool stop_intra = true;
  bool stop_inter = true;
  double epsilon = 1e-8;

  double threshold_ratio = 0.01;
  std::string point_adjust = "on";  // on | off | both
  bool plot = false;
  std::string grid = "all";  // ablation axes: stop | patch | loss | all

  std::size_t synth_length = 2000;
  std::size_t synth_dim = 3;
  double synth_rate = 0.05;
  double noise_sigma = 0.1;
  std::vector<std::string> synth_kinds{"spike", "level-shift", "frequency-change"};
};

inline LossVariant loss_variant_from(const std::string& s) {
  if (s == "symmetric-kl") return LossVariant::symmetric_kl;
  if (s == "simple-kl") return LossVariant::simple_kl;
  if (s == "js") return LossVariant::js;
  throw ConfigError("unknown loss variant '" + s + "' (symmetric-kl, simple-kl, js)");
}

inline ViewPairing pairing_from(const std::string& s) {
  if (s == "both") return ViewPairing::both;
  if (s == "intra-only") return ViewPairing::intra_only;
  if (s == "inter-only") return ViewPairing::inter_only;
  throw ConfigError("unknown pairing '" + s + "' (both, intra-only, inter-only)");
}

inline NormMode norm_mode_from_config(const std::string& s) {
  if (s == "raw") return NormMode::raw;
  if (s == "none") return NormMode::none;
  if (s == "per_component" || s == "per-component") return NormMode::per_component;
  throw ConfigError("unknown normalization '" + s + "' (raw, none, per-component)");
}

inline AnomalyKind anomaly_kind_from(const std::string& s) {
  if (s == "spike") return AnomalyKind::spike;
  if (s == "level-shift") return AnomalyKind::level_shift;
  if (s == "frequency-change") return AnomalyKind::frequency_change;
  throw ConfigError("unknown anomaly kind '" + s +
                    "' (spike, level-shift, frequency-change)");
}

inline LossConfig loss_config_from(const RunConfig& rc) {
  LossConfig lc;
  lc.variant = loss_variant_from(rc.loss_variant);
  lc.pairing = pairing_from(rc.pairing);
  lc.stop_intra = rc.stop_intra;
  lc.stop_inter = rc.stop_inter;
  lc.epsilon = rc.epsilon;
  if (lc.epsilon <= 0.0) throw ConfigError("epsilon must be positive");
  return lc;
}

inline ModelConfig model_config_from(const RunConfig& rc) {
  ModelConfig mc;
  mc.window = rc.window;
  mc.patch_sizes = rc.patch_sizes;
  mc.enc.d_model = rc.d_model;
  mc.enc.heads = rc.heads;
  mc.enc.layers = rc.layers;
  mc.alpha = rc.alpha;
  mc.norm = norm_mode_from_config(rc.normalization);
  validate_model_config(mc);
  return mc;
}

inline TrainConfig train_config_from(const RunConfig& rc) {
  TrainConfig tc;
  tc.epochs = rc.epochs;
  tc.batch = rc.batch;
  tc.stride = rc.train_stride;
  tc.seed = rc.seed;
  tc.threads = rc.threads == 0 ? 1 : rc.threads;
  tc.adam.lr = rc.lr;
  tc.loss = loss_config_from(rc);
  if (tc.adam.lr <= 0.0) throw ConfigError("lr must be positive");
  return tc;
}

inline SynthConfig synth_config_from(const RunConfig& rc, bool with_anomalies,
                                     std::uint64_t seed) {
  SynthConfig sc;
  sc.length = rc.synth_length;
  sc.dim = rc.synth_dim;
  sc.seed = seed;
  sc.rate = rc.synth_rate;
  sc.noise_sigma = rc.noise_sigma;
  if (with_anomalies)
    for (const auto& k : rc.synth_kinds) sc.kinds.push_back(anomaly_kind_from(k));
  return sc;
}

inline nlohmann::json run_config_json(const RunConfig& rc) {
  nlohmann::json j;
  j["data"] = rc.data;
  j["test_data"] = rc.test_data;
  j["checkpoint"] = rc.checkpoint;
  j["scores"] = rc.scores;
  j["labels"] = rc.labels;
  j["out_dir"] = rc.out_dir;
  j["window"] = rc.window;
  j["patch_sizes"] = rc.patch_sizes;
  j["alpha"] = rc.alpha;
  j["d_model"] = rc.d_model;
  j["heads"] = rc.heads;
  j["layers"] = rc.layers;
  j["normalization"] = rc.normalization;
  j["lr"] = rc.lr;
  j["batch"] = rc.batch;
  j["epochs"] = rc.epochs;
  j["seed"] = rc.seed;
  j["train_stride"] = rc.train_stride;
  j["score_stride"] = rc.score_stride;
  j["threads"] = rc.threads;
  j["loss_variant"] = rc.loss_variant;
  j["pairing"] = rc.pairing;
  j["stop_intra"] = rc.stop_intra;
  j["stop_inter"] = rc.stop_inter;
  j["epsilon"] = rc.epsilon;
  j["threshold_ratio"] = rc.threshold_ratio;
  j["point_adjust"] = rc.point_adjust;
  j["plot"] = rc.plot;
  j["grid"] = rc.grid;
  j["synth_length"] = rc.synth_length;
  j["synth_dim"] = rc.synth_dim;
  j["synth_rate"] = rc.synth_rate;
  j["noise_sigma"] = rc.noise_sigma;
  j["synth_kinds"] = rc.synth_kinds;
  return j;
}

// Strict: unknown keys are config errors so typos cannot silently fall back
// to defaults.
inline void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path + " must hold a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const nlohmann::json& v = it.value();
      if (k == "data") rc.data = v.get<std::string>();
      else if (k == "test_data") rc.test_data = v.get<std::string>();
      else if (k == "checkpoint") rc.checkpoint = v.get<std::string>();
      else if (k == "scores") rc.scores = v.get<std::string>();
      else if (k == "labels") rc.labels = v.get<std::string>();
      else if (k == "out_dir") rc.out_dir = v.get<std::string>();
      else if (k == "window") rc.window = v.get<std::size_t>();
      else if (k == "patch_sizes") rc.patch_sizes = v.get<std::vector<std::size_t>>();
      else if (k == "alpha") rc.alpha = v.get<double>();
      else if (k == "d_model") rc.d_model = v.get<std::size_t>();
      else if (k == "heads") rc.heads = v.get<std::size_t>();
      else if (k == "layers") rc.layers = v.get<std::size_t>();
      else if (k == "normalization") rc.normalization = v.get<std::string>();
      else if (k == "lr") rc.lr = v.get<double>();
      else if (k == "batch") rc.batch = v.get<std::size_t>();
      else if (k == "epochs") rc.epochs = v.get<std::size_t>();
      else if (k == "seed") rc.seed = v.get<std::uint64_t>();
      else if (k == "train_stride") rc.train_stride = v.get<std::size_t>();
      else if (k == "score_stride") rc.score_stride = v.get<std::size_t>();
      else if (k == "threads") rc.threads = v.get<std::size_t>();
      else if (k == "loss_variant") rc.loss_variant = v.get<std::string>();
      else if (k == "pairing") rc.pairing = v.get<std::string>();
      else if (k == "stop_intra") rc.stop_intra = v.get<bool>();
      else if (k == "stop_inter") rc.stop_inter = v.get<bool>();
      else if (k == "epsilon") rc.epsilon = v.get<double>();
      else if (k == "threshold_ratio") rc.threshold_ratio = v.get<double>();
      else if (k == "point_adjust") rc.point_adjust = v.get<std::string>();
      else if (k == "plot") rc.plot = v.get<bool>();
      else if (k == "grid") rc.grid = v.get<std::string>();
      else if (k == "synth_length") rc.synth_length = v.get<std::size_t>();
      else if (k == "synth_dim") rc.synth_dim = v.get<std::size_t>();
      else if (k == "synth_rate") rc.synth_rate = v.get<double>();
      else if (k == "noise_sigma") rc.noise_sigma = v.get<double>();
      else if (k == "synth_kinds") rc.synth_kinds = v.get<std::vector<std::string>>();
      else throw ConfigError("unknown config key '" + k + "' in " + path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value in config " + path + ": " + e.what());
  }
}

inline void write_config_echo(const RunConfig& rc, const std::string& dir,
                              const std::string& command) {
  nlohmann::json j = run_config_json(rc);
  j["command"] = command;
  std::ofstream out(dir + "/config_echo.json");
  if (!out) throw DataError("cannot write config echo in " + dir);
  out << j.dump(2) << '\n';
}

}  // namespace tsad

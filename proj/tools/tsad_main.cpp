#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "tsad/tsad.hpp"

namespace fs = std::filesystem;

namespace {

using namespace tsad;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Raw binary datasets travel as a JSON sidecar next to the payload; anything
// else is CSV.
TimeSeriesDataset load_dataset(const std::string& path) {
  if (ends_with(path, ".json")) return load_raw(path);
  return load_csv(path);
}

TimeSeriesDataset load_train_data(const RunConfig& rc) {
  if (rc.data == "synth") return synthesize(synth_config_from(rc, false, rc.seed)).data;
  return load_dataset(rc.data);
}

std::vector<int> load_labels_file(const std::string& path) {
  if (ends_with(path, ".csv")) {
    TimeSeriesDataset ds = load_csv(path);
    if (!ds.has_labels()) throw DataError(path + " has no label column");
    return ds.labels;
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::string s = detail::trim(line);
    if (s.empty()) continue;
    if (s == "0") labels.push_back(0);
    else if (s == "1") labels.push_back(1);
    else throw DataError("label not in {0,1} at line " + std::to_string(row) + " in " + path);
  }
  if (labels.empty()) throw DataError("no labels in " + path);
  return labels;
}

void ensure_parent_dir(const std::string& file_path) {
  fs::path parent = fs::path(file_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Defaults, then the config file, then only the flags the user actually
// passed. Each subcommand owns one of these.
struct FlagSet {
  RunConfig staging;
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>> bound;

  void add_config(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file; flags override its values");
  }
  template <typename T>
  CLI::Option* opt(CLI::App* app, const std::string& name, T RunConfig::*member,
                   const std::string& desc) {
    CLI::Option* o = app->add_option(name, staging.*member, desc);
    bound.emplace_back(o, [member](RunConfig& dst, const RunConfig& src) { dst.*member = src.*member; });
    return o;
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, bool RunConfig::*member,
                    const std::string& desc) {
    CLI::Option* o = app->add_flag(name, staging.*member, desc);
    bound.emplace_back(o, [member](RunConfig& dst, const RunConfig& src) { dst.*member = src.*member; });
    return o;
  }
  RunConfig resolve() const {
    RunConfig rc;
    if (!config_path.empty()) apply_config_file(rc, config_path);
    for (const auto& [o, apply] : bound)
      if (o->count() > 0) apply(rc, staging);
    return rc;
  }
};

void add_model_flags(FlagSet& f, CLI::App* app) {
  f.opt(app, "--window", &RunConfig::window, "sliding window length W");
  f.opt(app, "--patch-sizes", &RunConfig::patch_sizes, "patch sizes, each dividing W")
      ->delimiter(',');
  f.opt(app, "--alpha", &RunConfig::alpha, "trend smoothing weight");
  f.opt(app, "--d-model", &RunConfig::d_model, "embedding width");
  f.opt(app, "--heads", &RunConfig::heads, "attention heads");
  f.opt(app, "--layers", &RunConfig::layers, "attention layers");
  f.opt(app, "--normalization", &RunConfig::normalization,
        "input normalization: raw, none, per-component");
}

void add_loss_flags(FlagSet& f, CLI::App* app) {
  f.opt(app, "--loss-variant", &RunConfig::loss_variant,
        "loss: symmetric-kl, simple-kl, js");
  f.opt(app, "--pairing", &RunConfig::pairing, "view pairing: both, intra-only, inter-only");
  f.flag(app, "--stop-intra,!--no-stop-intra", &RunConfig::stop_intra,
         "stop gradients into the intra view of the second term");
  f.flag(app, "--stop-inter,!--no-stop-inter", &RunConfig::stop_inter,
         "stop gradients into the inter view of the first term");
  f.opt(app, "--epsilon", &RunConfig::epsilon, "log clamp floor");
}

void add_train_flags(FlagSet& f, CLI::App* app) {
  f.opt(app, "--lr", &RunConfig::lr, "learning rate");
  f.opt(app, "--batch", &RunConfig::batch, "minibatch size in windows");
  f.opt(app, "--epochs", &RunConfig::epochs, "training epochs");
  f.opt(app, "--train-stride", &RunConfig::train_stride, "training window stride (0 = W)");
}

void add_synth_flags(FlagSet& f, CLI::App* app) {
  f.opt(app, "--synth-length", &RunConfig::synth_length, "synthetic series length");
  f.opt(app, "--synth-dim", &RunConfig::synth_dim, "synthetic variable count");
  f.opt(app, "--synth-rate", &RunConfig::synth_rate, "target anomaly fraction");
  f.opt(app, "--noise-sigma", &RunConfig::noise_sigma, "synthetic noise level");
  f.opt(app, "--synth-kinds", &RunConfig::synth_kinds,
        "anomaly kinds: spike, level-shift, frequency-change")
      ->delimiter(',');
}

int cmd_train(const RunConfig& rc) {
  if (rc.data.empty()) throw ConfigError("train needs --data (path or 'synth')");
  TimeSeriesDataset train_ds = load_train_data(rc);
  ModelConfig mc = model_config_from(rc);
  mc.dim = train_ds.dim;
  ModelState<float> ms = init_model<float>(mc, rc.seed);
  TrainConfig tc = train_config_from(rc);
  TrainHistory hist = train_model(ms, train_ds, tc);

  fs::create_directories(rc.out_dir);
  write_loss_csv(rc.out_dir + "/loss.csv", hist.mean_loss_intra);
  std::string ckpt = rc.checkpoint.empty() ? rc.out_dir + "/model.tsck" : rc.checkpoint;
  ensure_parent_dir(ckpt);
  save_checkpoint(ckpt, ms);
  write_config_echo(rc, rc.out_dir, "train");
  std::cout << "trained " << rc.epochs << " epoch(s) on " << train_ds.length << "x"
            << train_ds.dim << ", final mean intra loss "
            << detail::format_double(hist.mean_loss_intra.back()) << "\n"
            << "checkpoint: " << ckpt << "\nloss history: " << rc.out_dir << "/loss.csv\n";
  return 0;
}

int cmd_score(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ConfigError("score needs --checkpoint");
  if (rc.data.empty()) throw ConfigError("score needs --data");
  ModelState<float> ms = load_checkpoint<float>(rc.checkpoint);
  TimeSeriesDataset test_ds = load_dataset(rc.data);
  LossConfig lc = loss_config_from(rc);
  std::vector<double> scores =
      score_series(test_ds, ms, lc, rc.score_stride, rc.threads == 0 ? 1 : rc.threads);
  double rho = threshold_from_ratio(scores, rc.threshold_ratio);
  std::vector<int> preds = classify(scores, rho);

  fs::create_directories(rc.out_dir);
  std::string scores_path = rc.scores.empty() ? rc.out_dir + "/scores.csv" : rc.scores;
  ensure_parent_dir(scores_path);
  write_scores_csv(scores_path, scores, preds, test_ds.labels);
  if (rc.plot) write_score_svg(rc.out_dir + "/scores.svg", scores, test_ds.labels, rho);
  write_config_echo(rc, rc.out_dir, "score");
  std::size_t flagged = 0;
  for (int p : preds) flagged += static_cast<std::size_t>(p);
  std::cout << "scored " << scores.size() << " timestamps, threshold "
            << detail::format_double(rho) << ", flagged " << flagged << "\n"
            << "scores: " << scores_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  if (rc.scores.empty()) throw ConfigError("eval needs --scores");
  if (rc.point_adjust != "on" && rc.point_adjust != "off" && rc.point_adjust != "both")
    throw ConfigError("point_adjust must be on, off, or both");
  ScoresFile sf = read_scores_csv(rc.scores);
  std::vector<int> labels = rc.labels.empty() ? sf.labels : load_labels_file(rc.labels);
  if (labels.empty())
    throw DataError("eval needs labels (label column in the scores file or --labels)");

  double rho = threshold_from_ratio(sf.scores, rc.threshold_ratio);
  std::vector<int> preds = classify(sf.scores, rho);
  MetricsReport raw = compute_metrics(preds, labels);
  nlohmann::json out;
  if (rc.point_adjust == "off") {
    out = metrics_json(raw, rho, false);
  } else {
    MetricsReport adjusted = compute_metrics(point_adjust(preds, labels), labels);
    if (rc.point_adjust == "on")
      out = metrics_json(adjusted, rho, true);
    else
      out = nlohmann::json::array({metrics_json(raw, rho, false), metrics_json(adjusted, rho, true)});
  }

  fs::create_directories(rc.out_dir);
  std::ofstream mout(rc.out_dir + "/metrics.json");
  if (!mout) throw DataError("cannot write metrics in " + rc.out_dir);
  mout << out.dump(2) << '\n';
  write_config_echo(rc, rc.out_dir, "eval");
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& rc) {
  if (rc.data.empty()) throw ConfigError("ablate needs --data (path or 'synth')");
  if (rc.test_data.empty()) throw ConfigError("ablate needs --test-data (path or 'synth')");
  bool vary_stop = rc.grid == "stop" || rc.grid == "all";
  bool vary_patch = rc.grid == "patch" || rc.grid == "all";
  bool vary_loss = rc.grid == "loss" || rc.grid == "all";
  if (!vary_stop && !vary_patch && !vary_loss)
    throw ConfigError("unknown grid '" + rc.grid + "' (stop, patch, loss, all)");

  TimeSeriesDataset train_ds = load_train_data(rc);
  TimeSeriesDataset test_ds = rc.test_data == "synth"
                                  ? synthesize(synth_config_from(rc, true, rc.seed + 1)).data
                                  : load_dataset(rc.test_data);
  if (!test_ds.has_labels()) throw DataError("ablation needs labeled test data");

  std::vector<std::pair<bool, bool>> stop_axis{{false, false}, {false, true}, {true, false}, {true, true}};
  std::vector<std::string> pair_axis{"intra-only", "inter-only", "both"};
  std::vector<std::string> loss_axis{"js", "simple-kl", "symmetric-kl"};
  if (!vary_stop) stop_axis = {{rc.stop_intra, rc.stop_inter}};
  if (!vary_patch) pair_axis = {rc.pairing};
  if (!vary_loss) loss_axis = {rc.loss_variant};

  fs::create_directories(rc.out_dir);
  std::string table_path = rc.out_dir + "/ablation.csv";
  std::ofstream table(table_path);
  if (!table) throw DataError("cannot write " + table_path);
  table << "stop_intra,stop_inter,pairing,loss_variant,precision,recall,f1\n";

  std::size_t threads = rc.threads == 0 ? 1 : rc.threads;
  for (const auto& [si, se] : stop_axis)
    for (const auto& pairing : pair_axis)
      for (const auto& variant : loss_axis) {
        RunConfig combo = rc;
        combo.stop_intra = si;
        combo.stop_inter = se;
        combo.pairing = pairing;
        combo.loss_variant = variant;
        ModelConfig mc = model_config_from(combo);
        mc.dim = train_ds.dim;
        ModelState<float> ms = init_model<float>(mc, rc.seed);
        train_model(ms, train_ds, train_config_from(combo));
        std::vector<double> scores =
            score_series(test_ds, ms, loss_config_from(combo), rc.score_stride, threads);
        double rho = threshold_from_ratio(scores, rc.threshold_ratio);
        std::vector<int> preds = classify(scores, rho);
        if (rc.point_adjust != "off") preds = point_adjust(preds, test_ds.labels);
        MetricsReport m = compute_metrics(preds, test_ds.labels);
        table << (si ? 1 : 0) << ',' << (se ? 1 : 0) << ',' << pairing << ',' << variant << ','
              << detail::format_double(m.precision) << ',' << detail::format_double(m.recall)
              << ',' << detail::format_double(m.f1) << '\n';
        std::cout << "ablate stop_intra=" << si << " stop_inter=" << se << " pairing=" << pairing
                  << " loss=" << variant << " f1=" << detail::format_double(m.f1) << "\n";
      }
  table.flush();
  if (!table) throw DataError("failed while writing " + table_path);
  write_config_echo(rc, rc.out_dir, "ablate");
  std::cout << "ablation table: " << table_path << "\n";
  return 0;
}

int cmd_decompose(const RunConfig& rc) {
  if (rc.data.empty()) throw ConfigError("decompose needs --data");
  TimeSeriesDataset ds = load_dataset(rc.data);
  Matrix<double> series(ds.length, ds.dim);
  series.data = ds.values;
  DecomposedWindow dw = decompose_window(series, rc.alpha);

  auto as_dataset = [&](const Matrix<double>& m) {
    TimeSeriesDataset out;
    out.channel_names = ds.channel_names;
    out.length = m.rows;
    out.dim = m.cols;
    out.values = m.data;
    return out;
  };
  fs::create_directories(rc.out_dir);
  save_csv(as_dataset(dw.trend), rc.out_dir + "/trend.csv");
  save_csv(as_dataset(dw.cyclical), rc.out_dir + "/cyclical.csv");
  write_config_echo(rc, rc.out_dir, "decompose");
  std::cout << "decomposed " << ds.length << "x" << ds.dim << " at alpha "
            << detail::format_double(rc.alpha) << "\n"
            << rc.out_dir << "/trend.csv\n" << rc.out_dir << "/cyclical.csv\n";
  return 0;
}

int cmd_synth(const RunConfig& rc) {
  SynthResult train = synthesize(synth_config_from(rc, false, rc.seed));
  SynthResult test = synthesize(synth_config_from(rc, true, rc.seed + 1));
  train.data.labels.clear();
  fs::create_directories(rc.out_dir);
  save_csv(train.data, rc.out_dir + "/train.csv");
  save_csv(test.data, rc.out_dir + "/test.csv");
  std::ofstream events(rc.out_dir + "/events.csv");
  if (!events) throw DataError("cannot write events in " + rc.out_dir);
  events << "kind,start,length\n";
  for (const InjectedAnomaly& e : test.events)
    events << anomaly_kind_name(e.kind) << ',' << e.start << ',' << e.length << '\n';
  write_config_echo(rc, rc.out_dir, "synth");
  std::size_t anomalous = 0;
  for (int l : test.data.labels) anomalous += static_cast<std::size_t>(l);
  std::cout << "synthesized " << rc.synth_length << "x" << rc.synth_dim << ": "
            << rc.out_dir << "/train.csv (clean), " << rc.out_dir << "/test.csv ("
            << test.events.size() << " events, " << anomalous << " anomalous points)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decomposition-based multi-scale attention anomaly detection for multivariate time series"};
  app.require_subcommand(1);

  FlagSet train_f, score_f, eval_f, ablate_f, dec_f, synth_f;

  CLI::App* train_cmd = app.add_subcommand("train", "fit a model and write a checkpoint");
  train_f.add_config(train_cmd);
  train_f.opt(train_cmd, "--data", &RunConfig::data, "training series (CSV, raw sidecar, or 'synth')");
  train_f.opt(train_cmd, "--checkpoint", &RunConfig::checkpoint, "checkpoint output path");
  train_f.opt(train_cmd, "--out-dir", &RunConfig::out_dir, "output directory");
  train_f.opt(train_cmd, "--seed", &RunConfig::seed, "random seed");
  train_f.opt(train_cmd, "--threads", &RunConfig::threads, "worker thread cap");
  add_model_flags(train_f, train_cmd);
  add_train_flags(train_f, train_cmd);
  add_loss_flags(train_f, train_cmd);
  add_synth_flags(train_f, train_cmd);

  CLI::App* score_cmd = app.add_subcommand("score", "score a series with a trained checkpoint");
  score_f.add_config(score_cmd);
  score_f.opt(score_cmd, "--data", &RunConfig::data, "series to score (CSV or raw sidecar)");
  score_f.opt(score_cmd, "--checkpoint", &RunConfig::checkpoint, "checkpoint to load");
  score_f.opt(score_cmd, "--scores", &RunConfig::scores, "scores CSV output path");
  score_f.opt(score_cmd, "--out-dir", &RunConfig::out_dir, "output directory");
  score_f.opt(score_cmd, "--score-stride", &RunConfig::score_stride, "scoring window stride (0 = W)");
  score_f.opt(score_cmd, "--threshold-ratio", &RunConfig::threshold_ratio, "expected anomaly fraction");
  score_f.opt(score_cmd, "--threads", &RunConfig::threads, "worker thread cap");
  score_f.flag(score_cmd, "--plot", &RunConfig::plot, "emit an SVG score plot");
  score_f.opt(score_cmd, "--pairing", &RunConfig::pairing, "view pairing: both, intra-only, inter-only");
  score_f.opt(score_cmd, "--epsilon", &RunConfig::epsilon, "log clamp floor");

  CLI::App* eval_cmd = app.add_subcommand("eval", "compute metrics from a scores file");
  eval_f.add_config(eval_cmd);
  eval_f.opt(eval_cmd, "--scores", &RunConfig::scores, "scores CSV to evaluate");
  eval_f.opt(eval_cmd, "--labels", &RunConfig::labels, "labels file when the scores CSV has none");
  eval_f.opt(eval_cmd, "--out-dir", &RunConfig::out_dir, "output directory");
  eval_f.opt(eval_cmd, "--threshold-ratio", &RunConfig::threshold_ratio, "expected anomaly fraction");
  eval_f.opt(eval_cmd, "--point-adjust", &RunConfig::point_adjust, "segment adjustment: on, off, both");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and evaluate a grid of loss variants");
  ablate_f.add_config(ablate_cmd);
  ablate_f.opt(ablate_cmd, "--data", &RunConfig::data, "training series (CSV, raw sidecar, or 'synth')");
  ablate_f.opt(ablate_cmd, "--test-data", &RunConfig::test_data, "labeled test series (or 'synth')");
  ablate_f.opt(ablate_cmd, "--grid", &RunConfig::grid, "axes to vary: stop, patch, loss, all");
  ablate_f.opt(ablate_cmd, "--out-dir", &RunConfig::out_dir, "output directory");
  ablate_f.opt(ablate_cmd, "--seed", &RunConfig::seed, "random seed");
  ablate_f.opt(ablate_cmd, "--threads", &RunConfig::threads, "worker thread cap");
  ablate_f.opt(ablate_cmd, "--score-stride", &RunConfig::score_stride, "scoring window stride (0 = W)");
  ablate_f.opt(ablate_cmd, "--threshold-ratio", &RunConfig::threshold_ratio, "expected anomaly fraction");
  ablate_f.opt(ablate_cmd, "--point-adjust", &RunConfig::point_adjust, "segment adjustment: on, off");
  add_model_flags(ablate_f, ablate_cmd);
  add_train_flags(ablate_f, ablate_cmd);
  add_loss_flags(ablate_f, ablate_cmd);
  add_synth_flags(ablate_f, ablate_cmd);

  CLI::App* dec_cmd = app.add_subcommand("decompose", "split a series into trend and cyclical CSVs");
  dec_f.add_config(dec_cmd);
  dec_f.opt(dec_cmd, "--data", &RunConfig::data, "series to decompose (CSV or raw sidecar)");
  dec_f.opt(dec_cmd, "--alpha", &RunConfig::alpha, "trend smoothing weight");
  dec_f.opt(dec_cmd, "--out-dir", &RunConfig::out_dir, "output directory");

  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic train/test dataset pair");
  synth_f.add_config(synth_cmd);
  synth_f.opt(synth_cmd, "--out-dir", &RunConfig::out_dir, "output directory");
  synth_f.opt(synth_cmd, "--seed", &RunConfig::seed, "random seed");
  add_synth_flags(synth_f, synth_cmd);

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(train_f.resolve());
    if (score_cmd->parsed()) return cmd_score(score_f.resolve());
    if (eval_cmd->parsed()) return cmd_eval(eval_f.resolve());
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_f.resolve());
    if (dec_cmd->parsed()) return cmd_decompose(dec_f.resolve());
    if (synth_cmd->parsed()) return cmd_synth(synth_f.resolve());
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const tsad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const tsad::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const tsad::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

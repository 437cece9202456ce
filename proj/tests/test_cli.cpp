#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/tmpdir.hpp"
#include "tsad/data_io.hpp"

using namespace tsad;
using Catch::Matchers::ContainsSubstring;
using testutil::slurp;
using testutil::TempDir;

namespace {

int run_cli(const std::string& args, const std::string& log_path) {
  std::string cmd = std::string("\"") + TSAD_CLI_PATH + "\" " + args + " >" + log_path + " 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

const std::string kSmallModel =
    " --window 12 --patch-sizes 3,4 --d-model 8 --layers 1 --epochs 2 --batch 8 --lr 0.001"
    " --threads 1";

}  // namespace

TEST_CASE("synthetic dataset generation is deterministic per seed", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  std::string base = " --synth-length 240 --synth-dim 2";

  REQUIRE(run_cli("synth --out-dir " + tmp.file("a") + " --seed 5" + base, log) == 0);
  REQUIRE(run_cli("synth --out-dir " + tmp.file("b") + " --seed 5" + base, log) == 0);
  REQUIRE(run_cli("synth --out-dir " + tmp.file("c") + " --seed 6" + base, log) == 0);

  REQUIRE(slurp(tmp.file("a/train.csv")) == slurp(tmp.file("b/train.csv")));
  REQUIRE(slurp(tmp.file("a/test.csv")) == slurp(tmp.file("b/test.csv")));
  REQUIRE(slurp(tmp.file("a/events.csv")) == slurp(tmp.file("b/events.csv")));
  REQUIRE(slurp(tmp.file("a/train.csv")) != slurp(tmp.file("c/train.csv")));

  std::string events = slurp(tmp.file("a/events.csv"));
  REQUIRE(first_line(events) == "kind,start,length");
  REQUIRE(line_count(events) >= 2);

  TimeSeriesDataset train = load_csv(tmp.file("a/train.csv"));
  REQUIRE(train.length == 240);
  REQUIRE(train.dim == 2);
  REQUIRE_FALSE(train.has_labels());
  TimeSeriesDataset test = load_csv(tmp.file("a/test.csv"));
  REQUIRE(test.has_labels());
}

TEST_CASE("seeded single-threaded runs reproduce every artifact byte for byte", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  REQUIRE(run_cli("synth --out-dir " + tmp.file("data") + " --seed 5 --synth-length 240"
                  " --synth-dim 2", log) == 0);

  for (const std::string& run : {"r1", "r2"}) {
    std::string out = tmp.file(run);
    REQUIRE(run_cli("train --data " + tmp.file("data/train.csv") + " --out-dir " + out +
                    " --seed 3" + kSmallModel, log) == 0);
    REQUIRE(run_cli("score --checkpoint " + out + "/model.tsck --data " +
                    tmp.file("data/test.csv") + " --out-dir " + out +
                    " --threshold-ratio 0.05 --threads 1 --plot", log) == 0);
  }

  REQUIRE(slurp(tmp.file("r1/loss.csv")) == slurp(tmp.file("r2/loss.csv")));
  REQUIRE(slurp(tmp.file("r1/model.tsck")) == slurp(tmp.file("r2/model.tsck")));
  REQUIRE(slurp(tmp.file("r1/scores.csv")) == slurp(tmp.file("r2/scores.csv")));

  std::string loss = slurp(tmp.file("r1/loss.csv"));
  REQUIRE(first_line(loss) == "epoch,mean_loss_intra");
  REQUIRE(line_count(loss) == 3);  // header + one row per epoch

  std::string scores = slurp(tmp.file("r1/scores.csv"));
  REQUIRE(first_line(scores) == "timestamp,score,prediction,label");
  REQUIRE(line_count(scores) == 241);

  std::string svg = slurp(tmp.file("r1/scores.svg"));
  REQUIRE(svg.rfind("<svg", 0) == 0);
  REQUIRE_THAT(svg, ContainsSubstring("</svg>"));
}

TEST_CASE("training twice on the built-in generator repeats the loss history", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  std::string args = "train --data synth --synth-length 240 --synth-dim 2 --seed 4" + kSmallModel;
  REQUIRE(run_cli(args + " --out-dir " + tmp.file("s1"), log) == 0);
  REQUIRE(run_cli(args + " --out-dir " + tmp.file("s2"), log) == 0);
  REQUIRE(slurp(tmp.file("s1/loss.csv")) == slurp(tmp.file("s2/loss.csv")));
  REQUIRE(slurp(tmp.file("s1/model.tsck")) == slurp(tmp.file("s2/model.tsck")));
}

TEST_CASE("evaluation reports metrics for raw and adjusted predictions", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  REQUIRE(run_cli("synth --out-dir " + tmp.file("data") + " --seed 7 --synth-length 240"
                  " --synth-dim 2", log) == 0);
  REQUIRE(run_cli("train --data " + tmp.file("data/train.csv") + " --out-dir " + tmp.file("m") +
                  " --seed 3" + kSmallModel, log) == 0);
  REQUIRE(run_cli("score --checkpoint " + tmp.file("m/model.tsck") + " --data " +
                  tmp.file("data/test.csv") + " --out-dir " + tmp.file("m") +
                  " --threshold-ratio 0.05 --threads 1", log) == 0);

  REQUIRE(run_cli("eval --scores " + tmp.file("m/scores.csv") + " --out-dir " + tmp.file("both") +
                  " --threshold-ratio 0.05 --point-adjust both", log) == 0);
  nlohmann::json both = nlohmann::json::parse(slurp(tmp.file("both/metrics.json")));
  REQUIRE(both.is_array());
  REQUIRE(both.size() == 2);
  REQUIRE(both[0]["point_adjusted"] == false);
  REQUIRE(both[1]["point_adjusted"] == true);
  for (const auto& entry : both)
    for (const char* key : {"precision", "recall", "f1", "tp", "fp", "fn", "tn", "threshold",
                            "point_adjusted"})
      REQUIRE(entry.contains(key));
  REQUIRE(both[1]["f1"].get<double>() >= both[0]["f1"].get<double>());

  REQUIRE(run_cli("eval --scores " + tmp.file("m/scores.csv") + " --out-dir " + tmp.file("off") +
                  " --threshold-ratio 0.05 --point-adjust off", log) == 0);
  nlohmann::json off = nlohmann::json::parse(slurp(tmp.file("off/metrics.json")));
  REQUIRE(off.is_object());
  REQUIRE(off["point_adjusted"] == false);
  REQUIRE(off["threshold"] == both[0]["threshold"]);
}

TEST_CASE("evaluation works from hand-written scores and a plain labels file", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  tmp.write("scores.csv",
            "timestamp,score,prediction\n"
            "0,1,0\n"
            "1,2,0\n"
            "2,3,1\n");
  tmp.write("labels.txt", "0\n1\n1\n");
  REQUIRE(run_cli("eval --scores " + tmp.file("scores.csv") + " --labels " +
                  tmp.file("labels.txt") + " --out-dir " + tmp.file("ev") +
                  " --threshold-ratio 0.34 --point-adjust off", log) == 0);
  nlohmann::json m = nlohmann::json::parse(slurp(tmp.file("ev/metrics.json")));
  // threshold = interpolated upper 34% quantile of {1,2,3} = 2.32; only the
  // last point is flagged, catching one of the two labeled points
  REQUIRE(m["tp"] == 1);
  REQUIRE(m["fp"] == 0);
  REQUIRE(m["fn"] == 1);
  REQUIRE(m["tn"] == 1);
  REQUIRE(m["precision"].get<double>() == 1.0);
  REQUIRE(m["recall"].get<double>() == 0.5);
}

TEST_CASE("config files seed the settings and explicit flags win", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  tmp.write("run.json", "{\"window\": 30, \"epochs\": 1, \"d_model\": 8, \"layers\": 1}");
  REQUIRE(run_cli("train --config " + tmp.file("run.json") + " --data synth" +
                  " --synth-length 240 --synth-dim 2 --seed 2 --out-dir " + tmp.file("out") +
                  " --window 12 --patch-sizes 3,4 --batch 8 --threads 1", log) == 0);
  nlohmann::json echo = nlohmann::json::parse(slurp(tmp.file("out/config_echo.json")));
  REQUIRE(echo["command"] == "train");
  REQUIRE(echo["window"] == 12);       // flag beat the config file
  REQUIRE(echo["epochs"] == 1);        // config file beat the default of 3
  REQUIRE(echo["d_model"] == 8);
  REQUIRE(echo["patch_sizes"] == nlohmann::json::array({3, 4}));
  std::string loss = slurp(tmp.file("out/loss.csv"));
  REQUIRE(line_count(loss) == 2);  // header + single epoch
}

TEST_CASE("decomposition artifacts add back to the original series", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  REQUIRE(run_cli("synth --out-dir " + tmp.file("data") + " --seed 9 --synth-length 240"
                  " --synth-dim 2", log) == 0);
  REQUIRE(run_cli("decompose --data " + tmp.file("data/test.csv") + " --alpha 400 --out-dir " +
                  tmp.file("dec"), log) == 0);

  TimeSeriesDataset original = load_csv(tmp.file("data/test.csv"));
  TimeSeriesDataset trend = load_csv(tmp.file("dec/trend.csv"));
  TimeSeriesDataset cyclical = load_csv(tmp.file("dec/cyclical.csv"));
  REQUIRE(trend.length == original.length);
  REQUIRE(trend.dim == original.dim);
  REQUIRE(trend.channel_names == original.channel_names);
  for (std::size_t t = 0; t < original.length; ++t)
    for (std::size_t j = 0; j < original.dim; ++j)
      REQUIRE(trend.at(t, j) + cyclical.at(t, j) ==
              Catch::Approx(original.at(t, j)).margin(1e-9));
}

TEST_CASE("configuration mistakes exit with status 2 and a pointed message", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");

  REQUIRE(run_cli("train --data synth --synth-length 240 --window 100 --patch-sizes 3"
                  " --epochs 1", log) == 2);
  REQUIRE_THAT(slurp(log), ContainsSubstring("patch size must divide window"));

  tmp.write("bad.json", "{\"windoww\": 30}");
  REQUIRE(run_cli("train --config " + tmp.file("bad.json") + " --data synth", log) == 2);
  REQUIRE_THAT(slurp(log), ContainsSubstring("unknown config key"));

  REQUIRE(run_cli("train --data synth --synth-length 240 --normalization bogus", log) == 2);
  REQUIRE(run_cli("eval --scores nowhere.csv --point-adjust sometimes", log) == 2);
  REQUIRE(run_cli("train", log) == 2);  // --data is required
  REQUIRE(run_cli("score --checkpoint x.tsck", log) == 2);  // --data is required
}

TEST_CASE("missing inputs exit with status 3", "[cli]") {
  TempDir tmp;
  std::string log = tmp.file("log.txt");
  REQUIRE(run_cli("score --checkpoint " + tmp.file("absent.tsck") + " --data " +
                  tmp.file("absent.csv"), log) == 3);
  REQUIRE_THAT(slurp(log), ContainsSubstring("data error"));
  REQUIRE(run_cli("decompose --data " + tmp.file("absent.csv"), log) == 3);
  REQUIRE(run_cli("eval --scores " + tmp.file("absent.csv"), log) == 3);
}

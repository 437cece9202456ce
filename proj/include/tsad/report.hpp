#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsad/data_io.hpp"
#include "tsad/detect.hpp"
#include "tsad/errors.hpp"

namespace tsad {

inline void write_loss_csv(const std::string& path, const std::vector<double>& mean_loss_intra) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,mean_loss_intra\n";
  for (std::size_t e = 0; e < mean_loss_intra.size(); ++e)
    out << (e + 1) << ',' << detail::format_double(mean_loss_intra[e]) << '\n';
}

inline void write_scores_csv(const std::string& path, const std::vector<double>& scores,
                             const std::vector<int>& predictions,
                             const std::vector<int>& labels) {
  if (scores.size() != predictions.size())
    throw DataError("scores and predictions lengths differ");
  if (!labels.empty() && labels.size() != scores.size())
    throw DataError("scores and labels lengths differ");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "timestamp,score,prediction";
  if (!labels.empty()) out << ",label";
  out << '\n';
  for (std::size_t t = 0; t < scores.size(); ++t) {
    out << t << ',' << detail::format_double(scores[t]) << ',' << predictions[t];
    if (!labels.empty()) out << ',' << labels[t];
    out << '\n';
  }
}

struct ScoresFile {
  std::vector<double> scores;
  std::vector<int> predictions;
  std::vector<int> labels;  // empty when the file has no label column
};

inline ScoresFile read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  bool labeled = !header.empty() && header.back() == "label";
  std::size_t expected = labeled ? 4 : 3;
  if (header.size() != expected || header[0] != "timestamp" || header[1] != "score" ||
      header[2] != "prediction")
    throw DataError(path + " is not a scores file");
  ScoresFile sf;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != expected)
      throw DataError("ragged row (row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(expected) + ") in " + path);
    double score, pred;
    if (!detail::parse_double(cells[1], score) || !detail::parse_double(cells[2], pred))
      throw DataError("non-numeric cell at row " + std::to_string(row) + " in " + path);
    sf.scores.push_back(score);
    sf.predictions.push_back(static_cast<int>(pred));
    if (labeled) {
      double lab;
      if (!detail::parse_double(cells[3], lab) || (lab != 0.0 && lab != 1.0))
        throw DataError("label not in {0,1} at row " + std::to_string(row) + " in " + path);
      sf.labels.push_back(static_cast<int>(lab));
    }
  }
  if (sf.scores.empty()) throw DataError("no data rows in " + path);
  return sf;
}

inline nlohmann::json metrics_json(const MetricsReport& r, double threshold,
                                   bool point_adjusted) {
  nlohmann::json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["tn"] = r.tn;
  j["threshold"] = threshold;
  j["point_adjusted"] = point_adjusted;
  return j;
}

// Self-contained score plot: score polyline, shaded label spans, threshold
// rule. Well-formed standalone SVG.
inline void write_score_svg(const std::string& path, const std::vector<double>& scores,
                            const std::vector<int>& labels, double threshold) {
  if (scores.empty()) throw DataError("nothing to plot");
  const double width = 960.0, height = 240.0, pad = 10.0;
  double lo = *std::min_element(scores.begin(), scores.end());
  double hi = *std::max_element(scores.begin(), scores.end());
  hi = std::max(hi, threshold);
  lo = std::min(lo, threshold);
  if (hi - lo < 1e-12) hi = lo + 1e-12;
  auto sx = [&](std::size_t t) {
    return pad + (width - 2 * pad) * static_cast<double>(t) /
                     static_cast<double>(scores.size() > 1 ? scores.size() - 1 : 1);
  };
  auto sy = [&](double v) { return height - pad - (height - 2 * pad) * (v - lo) / (hi - lo); };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  if (!labels.empty()) {
    std::size_t i = 0;
    while (i < labels.size()) {
      if (labels[i] == 1) {
        std::size_t j = i;
        while (j < labels.size() && labels[j] == 1) ++j;
        out << "<rect x=\"" << sx(i) << "\" y=\"" << pad << "\" width=\""
            << std::max(1.0, sx(j - 1) - sx(i)) << "\" height=\"" << height - 2 * pad
            << "\" fill=\"#fbb\" opacity=\"0.6\"/>\n";
        i = j;
      } else {
        ++i;
      }
    }
  }
  out << "<polyline fill=\"none\" stroke=\"#235\" stroke-width=\"1\" points=\"";
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (t) out << ' ';
    out << sx(t) << ',' << sy(scores[t]);
  }
  out << "\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << sy(threshold) << "\" x2=\"" << width - pad
      << "\" y2=\"" << sy(threshold)
      << "\" stroke=\"#a22\" stroke-width=\"1\" stroke-dasharray=\"6,3\"/>\n";
  out << "</svg>\n";
}

}  // namespace tsad

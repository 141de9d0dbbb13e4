// Copyright 2026 The nrrdd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "nrrdd/binio.hpp"
#include "nrrdd/harness.hpp"

namespace nrrdd {

namespace fs = std::filesystem;

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#17becf"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x
};

// Minimal SVG line chart; `mark_max` circles the highest point of each series.
std::string line_chart(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<Series>& series,
                       bool mark_max) {
  constexpr double W = 640, H = 400, L = 70, R = 160, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (x1 - x0 < 1e-12) {
    x0 -= 1;
    x1 += 1;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.05;
    y1 += 0.05;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
      << fmt(yv, 3) << "</text>\n"
      << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
      << fmt(xv, 2) << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << xlabel << "</text>\n"
    << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 "
    << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    const char* col = kPalette[k % 8];
    if (sr.points.size() > 1) {
      s << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
      for (auto [x, y] : sr.points) s << px(x) << "," << py(y) << " ";
      s << "\"/>\n";
    }
    for (auto [x, y] : sr.points)
      s << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3.5\" fill=\"" << col
        << "\"/>\n";
    if (mark_max && !sr.points.empty()) {
      const auto best = *std::max_element(
          sr.points.begin(), sr.points.end(),
          [](const auto& a, const auto& b) { return a.second < b.second; });
      const bool interior = sr.points.size() > 2 && best.first != sr.points.front().first &&
                            best.first != sr.points.back().first;
      s << "<circle cx=\"" << px(best.first) << "\" cy=\"" << py(best.second)
        << "\" r=\"9\" fill=\"none\" stroke=\"" << (interior ? "#d62728" : "#555")
        << "\" stroke-width=\"2.5\"/>\n"
        << "<text x=\"" << px(best.first) << "\" y=\"" << py(best.second) - 14
        << "\" text-anchor=\"middle\" fill=\"#d62728\">" << (interior ? "interior max " : "max ")
        << fmt(best.second, 3) << "</text>\n";
    }
    s << "<rect x=\"" << W - R + 14 << "\" y=\"" << T + 18 * k << "\" width=\"12\" height=\"12\" fill=\""
      << col << "\"/>\n<text x=\"" << W - R + 32 << "\" y=\"" << T + 18 * k + 11 << "\">"
      << sr.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars) {
  constexpr double W = 640, H = 400, L = 90, R = 20, T = 40, B = 60;
  double top = 1.0;
  for (const auto& b : bars) top = std::max(top, b.second);
  const double lt = std::log10(top) + 0.3;
  const double slot = (W - L - R) / std::max<std::size_t>(1, bars.size());
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (int e = 0; e <= static_cast<int>(lt); ++e) {
    const double y = H - B - e / lt * (H - T - B);
    s << "<text x=\"" << L - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e
      << "</text>\n<line x1=\"" << L << "\" y1=\"" << y << "\" x2=\"" << W - R << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = std::log10(std::max(1.0, bars[i].second)) / lt * (H - T - B);
    const double x = L + slot * i + slot * 0.15;
    s << "<rect x=\"" << x << "\" y=\"" << H - B - h << "\" width=\"" << slot * 0.7
      << "\" height=\"" << h << "\" fill=\"" << kPalette[i % 8] << "\"/>\n"
      << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << H - B - h - 5
      << "\" text-anchor=\"middle\">" << static_cast<long long>(bars[i].second) << "</text>\n"
      << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << H - B + 16
      << "\" text-anchor=\"middle\">" << bars[i].first << "</text>\n";
  }
  s << "<text x=\"20\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 20 "
    << (T + H - B) / 2 << ")\" text-anchor=\"middle\">store bytes (log scale)</text>\n</svg>\n";
  return s.str();
}

/// How the synthetic images were made, e.g. "cidd+nrr".
std::string image_variant(const ResultRow& r) { return r.init + (r.nrr ? "+nrr" : ""); }

std::string cell(const ResultRow& r, const std::string& col) {
  if (col == "experiment") return r.experiment;
  if (col == "run_id") return r.run_id;
  if (col == "mode") return r.mode;
  if (col == "init") return r.init;
  if (col == "ipc") return std::to_string(r.ipc);
  if (col == "beta") return std::to_string(r.beta);
  if (col == "seed") return std::to_string(r.seed);
  if (col == "nrr") return r.nrr ? "true" : "false";
  if (col == "alpha_bn") return fmt(r.alpha_bn, 3);
  if (col == "alpha_lr") return fmt(r.alpha_lr, 3);
  if (col == "epsilon") return fmt(r.epsilon, 3);
  if (col == "r") return fmt(r.r, 3);
  if (col == "pairs") return std::to_string(r.pairs);
  if (col == "records") return std::to_string(r.records);
  if (col == "store_bytes") return std::to_string(r.store_bytes);
  if (col == "label_bytes") return std::to_string(r.label_bytes);
  if (col == "teacher_accuracy") return fmt(r.teacher_accuracy);
  if (col == "accuracy") return fmt(r.accuracy);
  if (col == "sweep_key") return r.sweep_key;
  if (col == "sweep_value") return r.sweep_value;
  fail(ErrorCode::kInternal, "unknown result column " + col);
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return s;
}

}  // namespace

ReportOutputs cmd_report(const fs::path& dir, const CommandOptions& opt) {
  const fs::path results = dir / "results.jsonl";
  require(fs::exists(results), ErrorCode::kMissingArtifact,
          "no results at " + results.string() + "; run `transfer` first");
  const auto rows = read_results(results);
  require(!rows.empty(), ErrorCode::kInvalidArgument, results.string() + " has no result rows");
  const fs::path out = dir / "report";
  fs::create_directories(out);
  ReportOutputs rep;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out / name, text);
    rep.files.push_back(out / name);
  };

  // Raw table, one column per result field.
  std::string tsv;
  for (const auto& c : result_columns()) tsv += (tsv.empty() ? "" : "\t") + c;
  tsv += "\n";
  for (const auto& r : rows) {
    std::string line;
    for (const auto& c : result_columns()) line += (line.empty() ? "" : "\t") + cell(r, c);
    tsv += line + "\n";
  }
  emit("summary.tsv", tsv);

  // Mode comparison: median over seeds per (experiment, ipc, images, mode).
  using GroupKey = std::tuple<std::string, int, std::string, std::string>;
  std::map<GroupKey, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows)
    if (r.sweep_key.empty()) groups[{r.experiment, r.ipc, image_variant(r), r.mode}].push_back(&r);
  std::ostringstream table;
  table << "experiment\tipc\timages\tmode\tseeds\tmedian_accuracy\tstore_bytes\tlabel_bytes\n";
  std::map<std::tuple<std::string, int, std::string>, std::map<std::string, double>> by_mode;
  for (const auto& [key, g] : groups) {
    const auto& [experiment, ipc, images, mode] = key;
    std::vector<double> acc;
    for (const auto* r : g) acc.push_back(r->accuracy);
    const double med = median_of(acc);
    by_mode[{experiment, ipc, images}][mode] = med;
    table << experiment << "\t" << ipc << "\t" << images << "\t" << mode << "\t" << g.size()
          << "\t" << fmt(med) << "\t" << g.front()->store_bytes << "\t"
          << g.front()->label_bytes << "\n";
  }
  for (const auto& [key, modes] : by_mode)
    if (modes.count("dbr") && modes.count("oh") && modes.count("sl")) {
      const double rr = recover_rate(modes.at("dbr"), modes.at("oh"), modes.at("sl"));
      table << "recover_rate\t" << std::get<0>(key) << "\tipc " << std::get<1>(key) << "\t"
            << std::get<2>(key) << "\t" << (std::isfinite(rr) ? fmt(rr) : std::string("undefined"))
            << "\n";
    }
  rep.table = table.str();
  emit("modes.tsv", rep.table);

  // Accuracy against IPC, one series per (experiment, mode).
  std::map<std::string, std::map<int, std::vector<double>>> ipc_series;
  for (const auto& r : rows)
    if (r.sweep_key.empty()) ipc_series[r.experiment + "/" + image_variant(r) + "/" + r.mode][r.ipc].push_back(r.accuracy);
  std::vector<Series> series;
  for (const auto& [name, pts] : ipc_series) {
    Series s{name, {}};
    for (const auto& [ipc, acc] : pts) s.points.push_back({static_cast<double>(ipc), median_of(acc)});
    series.push_back(s);
  }
  if (!series.empty())
    emit("accuracy_vs_ipc.svg",
         line_chart("Student accuracy vs images per class", "IPC", "median test accuracy", series, false));

  // Storage per mode (median store file size).
  std::map<std::string, std::vector<double>> bytes;
  for (const auto& r : rows) bytes[r.mode].push_back(static_cast<double>(r.store_bytes));
  std::vector<std::pair<std::string, double>> bars;
  for (const char* m : {"oh", "dbr", "cl", "sl"})
    if (bytes.count(m)) bars.push_back({m, median_of(bytes[m])});
  emit("storage_bytes.svg", bar_chart("Label store size by mode", bars));

  // Sensitivity curves, one file per swept key.
  std::map<std::string, std::map<std::string, std::map<double, std::vector<double>>>> sweeps;
  for (const auto& r : rows)
    if (!r.sweep_key.empty()) {
      double x = 0.0;
      try {
        x = std::stod(r.sweep_value);
      } catch (const std::exception&) {
        continue;
      }
      sweeps[r.sweep_key][r.experiment + "/" + r.mode][x].push_back(r.accuracy);
    }
  for (const auto& [key, per] : sweeps) {
    std::vector<Series> ss;
    for (const auto& [name, pts] : per) {
      Series s{name, {}};
      for (const auto& [x, acc] : pts) s.points.push_back({x, median_of(acc)});
      ss.push_back(s);
    }
    emit("sensitivity_" + file_safe(key) + ".svg",
         line_chart("Sensitivity to " + key, key, "median test accuracy", ss, true));
  }
  if (opt.log) *opt.log << rep.table;
  return rep;
}

}  // namespace nrrdd

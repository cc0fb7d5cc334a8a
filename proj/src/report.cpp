#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sampleval/harness.hpp"
#include "sampleval/io.hpp"

namespace sampleval {

using nlohmann::json;

std::optional<Figure> parse_figure(std::string_view s) {
  for (auto f : {Figure::fig2, Figure::fig3, Figure::fig4, Figure::fig5})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

std::string_view to_string(Figure f) {
  switch (f) {
    case Figure::fig2: return "fig2";
    case Figure::fig3: return "fig3";
    case Figure::fig4: return "fig4";
    case Figure::fig5: return "fig5";
  }
  return "fig2";
}

Question question_of(Figure f) {
  switch (f) {
    case Figure::fig2: return Question::q1;
    case Figure::fig3: return Question::q2;
    case Figure::fig4: return Question::q3;
    case Figure::fig5: return Question::q4;
  }
  return Question::q1;
}

namespace {

struct Point {
  ScenarioId id;
  std::string sparsity;  // as written in scenarios.csv
  double mean = 0.0, low = 0.0, high = 0.0;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
const char* kFixedPalette[] = {"#000000", "#7f7f7f", "#bcbd22"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string render_panel(const std::vector<const Point*>& pts, const std::vector<std::size_t>& sizes, bool log_y,
                         const std::string& title, const std::string& y_label) {
  const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;

  double n_lo = 1, n_hi = 10;
  if (!sizes.empty()) {
    n_lo = static_cast<double>(*std::min_element(sizes.begin(), sizes.end()));
    n_hi = static_cast<double>(*std::max_element(sizes.begin(), sizes.end()));
  }
  if (n_hi <= n_lo) n_hi = n_lo * 10;

  double y_lo = 0, y_hi = 1, floor = 1e-4;
  if (log_y) {
    double min_pos = 1.0;
    for (auto* p : pts)
      for (double v : {p->mean, p->low})
        if (v > 0) min_pos = std::min(min_pos, v);
    floor = std::pow(10.0, std::floor(std::log10(min_pos)));
    y_lo = floor;
    y_hi = 1.0;
  } else {
    y_lo = 0.0;
    for (auto* p : pts) y_lo = std::min(y_lo, p->low);
    y_lo = std::floor(y_lo * 10) / 10;
    y_hi = 1.0;
  }
  auto X = [&](double n) { return L + pw * (std::log(n) - std::log(n_lo)) / (std::log(n_hi) - std::log(n_lo)); };
  auto Y = [&](double v) {
    if (log_y) {
      v = std::max(v, floor);
      return T + ph * (1 - (std::log10(v) - std::log10(y_lo)) / (std::log10(y_hi) - std::log10(y_lo)));
    }
    return T + ph * (1 - (v - y_lo) / (y_hi - y_lo));
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << num(L + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape_xml(title)
    << "</text>\n";
  s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (auto n : sizes) {
    const double x = X(static_cast<double>(n));
    s << "<line x1=\"" << num(x) << "\" y1=\"" << T + ph << "\" x2=\"" << num(x) << "\" y2=\"" << T + ph + 4
      << "\" stroke=\"#444\"/><text x=\"" << num(x) << "\" y=\"" << T + ph + 16 << "\" text-anchor=\"middle\">" << n
      << "</text>\n";
  }
  std::vector<double> yticks;
  if (log_y) {
    for (double v = y_lo; v <= y_hi * 1.0001; v *= 10) yticks.push_back(v);
  } else {
    for (double v = y_lo; v <= y_hi + 1e-9; v += (y_hi - y_lo) / 5) yticks.push_back(v);
  }
  for (double v : yticks) {
    const double y = Y(v);
    s << "<line x1=\"" << L << "\" y1=\"" << num(y) << "\" x2=\"" << L + pw << "\" y2=\"" << num(y)
      << "\" stroke=\"#e0e0e0\"/><text x=\"" << L - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
      << tick_label(v) << "</text>\n";
  }
  s << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">sample size n</text>\n";
  s << "<text transform=\"translate(16," << num(T + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape_xml(y_label) << "</text>\n";

  // Series.
  std::vector<Strategy> parametric, fixed;
  for (auto* p : pts) {
    auto& list = p->id.n ? parametric : fixed;
    if (std::find(list.begin(), list.end(), p->id.strategy) == list.end()) list.push_back(p->id.strategy);
  }
  double legend_y = T + 10;
  auto legend = [&](const char* color, const std::string& label, bool dashed) {
    s << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << num(legend_y) << "\" x2=\"" << L + pw + 36 << "\" y2=\""
      << num(legend_y) << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"5,3\"" : "")
      << "/><text x=\"" << L + pw + 42 << "\" y=\"" << num(legend_y + 4) << "\">" << escape_xml(label) << "</text>\n";
    legend_y += 16;
  };
  for (std::size_t k = 0; k < fixed.size(); ++k) {
    const char* color = kFixedPalette[k % 3];
    for (auto* p : pts) {
      if (p->id.n || p->id.strategy != fixed[k]) continue;
      s << "<rect x=\"" << L << "\" y=\"" << num(Y(p->high)) << "\" width=\"" << pw << "\" height=\""
        << num(std::max(0.0, Y(p->low) - Y(p->high))) << "\" fill=\"" << color << "\" fill-opacity=\"0.08\"/>\n";
      s << "<line x1=\"" << L << "\" y1=\"" << num(Y(p->mean)) << "\" x2=\"" << L + pw << "\" y2=\"" << num(Y(p->mean))
        << "\" stroke=\"" << color << "\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>\n";
    }
    legend(color, std::string(to_string(fixed[k])), true);
  }
  for (std::size_t k = 0; k < parametric.size(); ++k) {
    const char* color = kPalette[k % 8];
    std::vector<const Point*> series;
    for (auto* p : pts)
      if (p->id.n && p->id.strategy == parametric[k]) series.push_back(p);
    std::sort(series.begin(), series.end(), [](auto* a, auto* b) { return *a->id.n < *b->id.n; });
    std::string band, line;
    for (auto* p : series) band += num(X(static_cast<double>(*p->id.n))) + "," + num(Y(p->high)) + " ";
    for (auto it = series.rbegin(); it != series.rend(); ++it)
      band += num(X(static_cast<double>(*(*it)->id.n))) + "," + num(Y((*it)->low)) + " ";
    for (auto* p : series) line += num(X(static_cast<double>(*p->id.n))) + "," + num(Y(p->mean)) + " ";
    s << "<polygon points=\"" << band << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    s << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    for (auto* p : series)
      s << "<circle cx=\"" << num(X(static_cast<double>(*p->id.n))) << "\" cy=\"" << num(Y(p->mean))
        << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    legend(color, std::string(to_string(parametric[k])), false);
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

ReportFiles emit_report(const std::filesystem::path& run_dir, Figure figure, const std::filesystem::path& report_dir) {
  const auto manifest = json::parse(io::read_file(run_dir / "manifest.json"));
  const auto report_metric = manifest.at("config").at("report_metric").get<std::string>();
  const auto sizes = manifest.at("config").at("sampler").at("sizes").get<std::vector<std::size_t>>();
  const auto question = std::string(to_string(question_of(figure)));

  // Scenario list in grid order.
  std::vector<Point> points;
  {
    std::ifstream in(run_dir / "scenarios.csv");
    if (!in) throw Error("report: missing " + (run_dir / "scenarios.csv").string());
    io::CsvReader csv(in, (run_dir / "scenarios.csv").string());
    std::vector<std::string_view> f;
    const auto c_key = csv.column("scenario_id");
    const auto c_sparsity = csv.column("sparsity");
    while (csv.next(f)) {
      auto id = parse_scenario_key(f[c_key]);
      if (!id) csv.fail("bad scenario id '" + std::string(f[c_key]) + "'");
      points.push_back({*id, std::string(f[c_sparsity]), std::nan(""), 0, 0});
    }
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < points.size(); ++k) index[points[k].id.key()] = k;

  {
    std::ifstream in(run_dir / "results.csv");
    if (!in) throw Error("report: missing " + (run_dir / "results.csv").string());
    io::CsvReader csv(in, (run_dir / "results.csv").string());
    std::vector<std::string_view> f;
    const auto c_id = csv.column("scenario_id"), c_q = csv.column("question"), c_m = csv.column("metric"),
               c_k = csv.column("k"), c_mean = csv.column("mean"), c_lo = csv.column("ci_low"),
               c_hi = csv.column("ci_high");
    while (csv.next(f)) {
      if (f[c_q] != question || std::string(f[c_m]) + "@" + std::string(f[c_k]) != report_metric) continue;
      auto it = index.find(std::string(f[c_id]));
      if (it == index.end()) csv.fail("result for unknown scenario '" + std::string(f[c_id]) + "'");
      auto& p = points[it->second];
      p.mean = io::parse_double(f[c_mean], csv);
      p.low = io::parse_double(f[c_lo], csv);
      p.high = io::parse_double(f[c_hi], csv);
    }
  }
  std::vector<std::string> missing;
  for (const auto& p : points)
    if (std::isnan(p.mean)) missing.push_back(p.id.key());
  if (!missing.empty()) {
    std::string msg = "report " + std::string(to_string(figure)) + ": no " + question + " " + report_metric +
                      " results for " + std::to_string(missing.size()) + " scenario(s):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw Error(msg);
  }

  ReportFiles files;
  std::filesystem::create_directories(report_dir);
  const std::string fig(to_string(figure));
  std::string csv = "policy,sparsity,strategy,n,mean,ci_low,ci_high\n";
  for (const auto& p : points)
    csv += std::string(to_string(p.id.policy)) + "," + p.sparsity + "," + std::string(to_string(p.id.strategy)) + "," +
           (p.id.n ? std::to_string(*p.id.n) : std::string()) + "," + io::format_double(p.mean) + "," +
           io::format_double(p.low) + "," + io::format_double(p.high) + "\n";
  files.csv = report_dir / (fig + ".csv");
  io::write_file(files.csv, csv);

  const bool log_y = figure == Figure::fig2;
  const char* y_label = figure == Figure::fig2   ? "mean tie rate"
                        : figure == Figure::fig3 ? "mean Kendall tau-b vs. full on same source"
                        : figure == Figure::fig4 ? "mean Kendall tau-b vs. same sampler on G"
                                                 : "mean Kendall tau-b vs. full on G";
  // Panels in first-appearance order of (policy, sparsity).
  std::vector<std::pair<LoggerPolicy, std::string>> panels;
  for (const auto& p : points) {
    std::pair key{p.id.policy, p.sparsity};
    if (std::find(panels.begin(), panels.end(), key) == panels.end()) panels.push_back(key);
  }
  for (const auto& [policy, sparsity] : panels) {
    std::vector<const Point*> pts;
    for (const auto& p : points)
      if (p.id.policy == policy && p.sparsity == sparsity) pts.push_back(&p);
    const auto title = fig + ": " + std::string(to_string(policy)) + " logger, sparsity " + sparsity + " (" +
                       report_metric + ")";
    auto path = report_dir / (fig + "_" + std::string(to_string(policy)) + "_s" + sparsity + ".svg");
    io::write_file(path, render_panel(pts, sizes, log_y, title, y_label));
    files.charts.push_back(path);
  }
  return files;
}

}  // namespace sampleval

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "tracegen/report.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

namespace {

struct BoxGeom {
  double q1 = 0, median = 0, q3 = 0, lo = 0, hi = 0;  // whisker ends
  std::vector<double> outliers;
};

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

BoxGeom box_geometry(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  BoxGeom g;
  g.q1 = quantile(values, 0.25);
  g.median = quantile(values, 0.5);
  g.q3 = quantile(values, 0.75);
  const double iqr = g.q3 - g.q1;
  const double fence_lo = g.q1 - 1.5 * iqr;
  const double fence_hi = g.q3 + 1.5 * iqr;
  g.lo = g.q3;
  g.hi = g.q1;
  bool any = false;
  for (double v : values) {
    if (v < fence_lo || v > fence_hi) {
      g.outliers.push_back(v);
    } else {
      if (!any) {
        g.lo = g.hi = v;
        any = true;
      }
      g.lo = std::min(g.lo, v);
      g.hi = std::max(g.hi, v);
    }
  }
  if (!any) {
    g.lo = g.q1;
    g.hi = g.q3;
  }
  return g;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double nice_step(double range) {
  if (range <= 0) return 1.0;
  const double raw = range / 4.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step = 10.0;
  if (norm <= 1.0) step = 1.0;
  else if (norm <= 2.0) step = 2.0;
  else if (norm <= 5.0) step = 5.0;
  return step * mag;
}

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_boxplot_svg(const std::string& title, const std::vector<BoxSeries>& series) {
  if (series.empty()) throw ValidationError("boxplot: no series");
  for (const auto& s : series)
    if (s.values.empty()) throw ValidationError("boxplot: series '" + s.label + "' is empty");

  const double width = 120.0 + 110.0 * static_cast<double>(series.size());
  const double height = 340.0;
  const double left = 70.0, right = width - 20.0, top = 44.0, bottom = height - 56.0;

  double vmin = series[0].values[0], vmax = vmin;
  std::vector<BoxGeom> geoms;
  for (const auto& s : series) {
    geoms.push_back(box_geometry(s.values));
    for (double v : s.values) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  if (vmax - vmin < 1e-12) {
    vmin -= 0.5;
    vmax += 0.5;
  }
  const double pad = 0.06 * (vmax - vmin);
  vmin -= pad;
  vmax += pad;
  const auto y_of = [&](double v) {
    return bottom - (v - vmin) / (vmax - vmin) * (bottom - top);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
      << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\" font-weight=\"bold\">"
      << escape_text(title) << "</text>\n";

  // axes
  svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left)
      << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(bottom) << "\" x2=\"" << fmt(right)
      << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";

  const double step = nice_step(vmax - vmin);
  for (double tick = std::ceil(vmin / step) * step; tick <= vmax + 1e-12; tick += step) {
    const double y = y_of(tick);
    svg << "<line x1=\"" << fmt(left - 4) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(left)
        << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(right)
        << "\" y2=\"" << fmt(y) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(tick)
        << "</text>\n";
  }

  const double slot = (right - left) / static_cast<double>(series.size());
  const double box_w = std::min(54.0, slot * 0.5);
  for (size_t i = 0; i < series.size(); ++i) {
    const BoxGeom& g = geoms[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double x0 = cx - box_w / 2, x1 = cx + box_w / 2;
    // whiskers
    svg << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(y_of(g.hi)) << "\" x2=\"" << fmt(cx)
        << "\" y2=\"" << fmt(y_of(g.q3)) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(y_of(g.q1)) << "\" x2=\"" << fmt(cx)
        << "\" y2=\"" << fmt(y_of(g.lo)) << "\" stroke=\"black\"/>\n";
    for (double w : {g.hi, g.lo})
      svg << "<line x1=\"" << fmt(cx - box_w / 4) << "\" y1=\"" << fmt(y_of(w)) << "\" x2=\""
          << fmt(cx + box_w / 4) << "\" y2=\"" << fmt(y_of(w)) << "\" stroke=\"black\"/>\n";
    // box and median
    svg << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y_of(g.q3)) << "\" width=\"" << fmt(box_w)
        << "\" height=\"" << fmt(y_of(g.q1) - y_of(g.q3))
        << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y_of(g.median)) << "\" x2=\"" << fmt(x1)
        << "\" y2=\"" << fmt(y_of(g.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double o : g.outliers)
      svg << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(y_of(o))
          << "\" r=\"3\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(bottom + 20)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape_text(series[i].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string summary_table_md(const std::vector<std::pair<std::string, LogSummary>>& rows) {
  std::ostringstream out;
  out << "| split | traces | variants | activities | avg length | avg cycle time (h) | "
         "cond. ratio |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& [name, s] : rows) {
    out << "| " << name << " | " << s.traces << " | " << s.variants << " | " << s.activities
        << " | " << fmt_fixed(s.avg_trace_length, 2) << " | " << fmt_fixed(s.avg_cycle_time_hours, 1)
        << " | " << (s.cond_ratio ? fmt_fixed(*s.cond_ratio * 100.0, 1) + "%" : std::string("-"))
        << " |\n";
  }
  return out.str();
}

std::string variants_table_md(const EvaluationReport& report) {
  std::ostringstream out;
  out << "| model | variants | in train | in test | novel |\n";
  out << "|---|---|---|---|---|\n";
  out << "| test | " << report.test_variants << " | - | - | - |\n";
  for (const auto& ev : report.models)
    out << "| " << ev.name << " | " << fmt_fixed(ev.mean_variants, 1) << " | "
        << fmt_fixed(ev.mean_in_train, 1) << " | " << fmt_fixed(ev.mean_in_test, 1) << " | "
        << fmt_fixed(ev.mean_novel, 1) << " |\n";
  return out.str();
}

std::string ratios_table_md(const EvaluationReport& report) {
  std::ostringstream out;
  out << "| dataset | training | test |";
  for (const auto& ev : report.models) out << ' ' << ev.name << " |";
  out << "\n|---|---|---|";
  for (size_t i = 0; i < report.models.size(); ++i) out << "---|";
  out << "\n| " << report.dataset << " | " << fmt_fixed(report.train_ratio * 100.0, 1) << "% | "
      << fmt_fixed(report.test_ratio * 100.0, 1) << "% |";
  for (const auto& ev : report.models) {
    if (ev.mean_aposteriori)
      out << ' ' << fmt_fixed(*ev.mean_aposteriori * 100.0, 1) << "% |";
    else if (ev.mean_requested)
      out << ' ' << fmt_fixed(*ev.mean_requested * 100.0, 1) << "% |";
    else
      out << " - |";
  }
  out << '\n';
  return out.str();
}

std::string metrics_table_md(const EvaluationReport& report) {
  std::ostringstream out;
  out << "| model | RED | CTD | 2GD | CONF |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& ev : report.models) {
    out << "| " << ev.name << " | " << fmt_fixed(ev.red.mean) << " ± " << fmt_fixed(ev.red.stddev)
        << " | " << fmt_fixed(ev.ctd.mean) << " ± " << fmt_fixed(ev.ctd.stddev) << " | "
        << fmt_fixed(ev.two_gd.mean) << " ± " << fmt_fixed(ev.two_gd.stddev) << " | ";
    if (ev.conf)
      out << fmt_fixed(ev.conf->mean) << " ± " << fmt_fixed(ev.conf->stddev);
    else
      out << "-";
    out << " |\n";
  }
  return out.str();
}

std::vector<std::string> write_report_files(const EvaluationReport& report,
                                            const std::string& dir) {
  if (report.models.empty()) throw ValidationError("report: no model evaluations");
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;

  struct Panel {
    const char* name;
    const char* title;
    const MetricAggregate ModelEvaluation::* agg;
  };
  const Panel panels[] = {
      {"red", "Relative Event Distribution (EMD, hours)", &ModelEvaluation::red},
      {"ctd", "Cycle Time Distribution (EMD, hours)", &ModelEvaluation::ctd},
      {"two_gd", "2-Gram Distance", &ModelEvaluation::two_gd},
  };
  for (const Panel& p : panels) {
    std::vector<BoxSeries> series;
    for (const auto& ev : report.models) {
      const MetricAggregate& a = ev.*(p.agg);
      if (!a.values.empty()) series.push_back({ev.name, a.values});
    }
    if (series.empty()) continue;
    const std::string file = std::string(p.name) + "_" + report.dataset + ".svg";
    write_text_file(dir + "/" + file,
                    render_boxplot_svg(std::string(p.title) + " - " + report.dataset, series));
    written.push_back(file);
  }
  {
    std::vector<BoxSeries> series;
    for (const auto& ev : report.models)
      if (ev.conf && !ev.conf->values.empty()) series.push_back({ev.name, ev.conf->values});
    if (!series.empty()) {
      const std::string file = "conf_" + report.dataset + ".svg";
      write_text_file(dir + "/" + file,
                      render_boxplot_svg("Conformance (novel variants) - " + report.dataset, series));
      written.push_back(file);
    }
  }

  std::ostringstream tables;
  tables << "# Evaluation: " << report.dataset << "\n\n";
  tables << "Test log: " << report.test_traces << " traces, " << report.test_variants
         << " variants.\n\n";
  tables << "## Distribution metrics (mean ± std over generated logs)\n\n"
         << metrics_table_md(report) << '\n';
  tables << "## Variant statistics\n\n" << variants_table_md(report) << '\n';
  tables << "## Conditional ratios\n\n" << ratios_table_md(report);
  write_text_file(dir + "/tables.md", tables.str());
  written.push_back("tables.md");
  return written;
}

}  // namespace tracegen

#pragma once

#include <string>
#include <vector>

#include "tracegen/eventlog.hpp"
#include "tracegen/metrics.hpp"

namespace tracegen {

/// One box in a boxplot panel.
struct BoxSeries {
  std::string label;
  std::vector<double> values;
};

/// Standalone SVG boxplot panel: median, interquartile box, whiskers at the
/// most extreme points within 1.5 IQR, outliers as circles. Deterministic
/// byte-for-byte for fixed inputs.
std::string render_boxplot_svg(const std::string& title, const std::vector<BoxSeries>& series);

/// Markdown table mirroring the dataset description (one row per split).
std::string summary_table_md(const std::vector<std::pair<std::string, LogSummary>>& rows);

/// Markdown table of variant statistics per model (means over generated logs).
std::string variants_table_md(const EvaluationReport& report);

/// Markdown table of conditional ratios: training, test, then one column per
/// model with requested and a-posteriori values.
std::string ratios_table_md(const EvaluationReport& report);

/// Markdown table of distribution metrics (mean and stddev per model).
std::string metrics_table_md(const EvaluationReport& report);

/// Renders the full report directory: one SVG per metric plus tables.md.
/// Returns the files written (relative to `dir`).
std::vector<std::string> write_report_files(const EvaluationReport& report, const std::string& dir);

}  // namespace tracegen

#pragma once

// Self-contained SVG emitters for rate histories and connectivity heatmaps.

#include "pignn/core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pignn::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct LineChartOptions {
  std::string title;
  std::string x_label = "time (days)";
  std::string y_label = "rate (bbl/day)";
  /// Vertical dashed divider, e.g. the first test timestamp.
  std::optional<double> divider;
  int width = 820;
  int height = 460;
};

/// One <polyline> per series. The divider is a <line class="divider"> whose
/// data-time attribute holds the divider abscissa.
std::string line_chart(const std::vector<Series>& series, const LineChartOptions& options);

struct HeatmapOptions {
  std::string title;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  double vmin = 0.0;
  double vmax = 1.0;
  int cell = 64;
};

/// Lightness 0..255 for a value; larger values are darker.
int shade(double value, double vmin, double vmax);

/// One <rect class="cell"> per entry with data-value and fill from shade().
std::string heatmap(const Matrix& values, const HeatmapOptions& options);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pignn::svg

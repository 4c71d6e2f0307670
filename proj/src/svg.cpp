#include "pignn/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace pignn::svg {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string hex_gray(int level, bool blue) {
  char buf[8];
  if (blue) {
    // Tinted ramp: red/green follow the level, blue stays high.
    const int b = std::min(255, 96 + level * 159 / 255);
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", level, level, b);
  } else {
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", level, level, level);
  }
  return buf;
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const LineChartOptions& o) {
  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = o.width - left - right;
  const double ph = o.height - top - bottom;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw Error("series '" + s.label + "' has mismatched x and y lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (o.divider) {
    xmin = std::min(xmin, *o.divider);
    xmax = std::max(xmax, *o.divider);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
     << "\" viewBox=\"0 0 " << o.width << ' ' << o.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << escape(o.title)
     << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    os << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(top + ph + 18)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(yv) + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << o.height - 10
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << escape(o.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" font-family=\"sans-serif\" font-size=\"12\" "
     << "text-anchor=\"middle\" transform=\"rotate(-90 16 " << num(top + ph / 2) << ")\">" << escape(o.y_label)
     << "</text>\n";
  if (o.divider) {
    const double x = sx(*o.divider);
    os << "<line class=\"divider\" data-time=\"" << num(*o.divider) << "\" x1=\"" << num(x) << "\" y1=\"" << top
       << "\" x2=\"" << num(x) << "\" y2=\"" << top + ph << "\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>\n";
  }
  int row = 0;
  for (const auto& s : series) {
    os << "<polyline class=\"series\" data-label=\"" << escape(s.label) << "\" fill=\"none\" stroke=\""
       << escape(s.color) << "\" stroke-width=\"1.6\"" << (s.dashed ? " stroke-dasharray=\"4,3\"" : "")
       << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << num(sx(s.x[i])) << ',' << num(sy(s.y[i])) << ' ';
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18 * row++;
    os << "<line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 32)
       << "\" y2=\"" << num(ly) << "\" stroke=\"" << escape(s.color) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(left + pw + 38) << "\" y=\"" << num(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int shade(double value, double vmin, double vmax) {
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  const double f = std::clamp((value - vmin) / span, 0.0, 1.0);
  return static_cast<int>(std::lround(255.0 * (1.0 - f)));
}

std::string heatmap(const Matrix& values, const HeatmapOptions& o) {
  const int left = 80, top = 50;
  const auto rows = values.rows();
  const auto cols = values.cols();
  const int width = left + static_cast<int>(cols) * o.cell + 20;
  const int height = top + static_cast<int>(rows) * o.cell + 20;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"15\">" << escape(o.title)
     << "</text>\n";
  for (Eigen::Index c = 0; c < cols; ++c) {
    const std::string label = c < static_cast<Eigen::Index>(o.col_labels.size()) ? o.col_labels[static_cast<std::size_t>(c)] : std::to_string(c);
    os << "<text x=\"" << left + c * o.cell + o.cell / 2 << "\" y=\"" << top - 8
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::string label = r < static_cast<Eigen::Index>(o.row_labels.size()) ? o.row_labels[static_cast<std::size_t>(r)] : std::to_string(r);
    os << "<text x=\"" << left - 8 << "\" y=\"" << top + r * o.cell + o.cell / 2 + 4
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" << escape(label) << "</text>\n";
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = values(r, c);
      const int level = shade(v, o.vmin, o.vmax);
      os << "<rect class=\"cell\" data-value=\"" << num(v) << "\" data-shade=\"" << level << "\" x=\""
         << left + c * o.cell << "\" y=\"" << top + r * o.cell << "\" width=\"" << o.cell << "\" height=\""
         << o.cell << "\" fill=\"" << hex_gray(level, true) << "\" stroke=\"white\"/>\n";
      os << "<text x=\"" << left + c * o.cell + o.cell / 2 << "\" y=\"" << top + r * o.cell + o.cell / 2 + 4
         << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" fill=\""
         << (level < 128 ? "white" : "black") << "\">" << num(std::round(v * 100.0) / 100.0) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
}

}  // namespace pignn::svg

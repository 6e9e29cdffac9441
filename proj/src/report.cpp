#include "pingpong/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace pingpong {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
constexpr double kMarginLeft = 60, kMarginRight = 150, kMarginTop = 36, kMarginBottom = 46;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Axes {
  double x0, x1, y0, y1;
  PlotFrame f;

  double px(double x) const { return kMarginLeft + (x - x0) / (x1 - x0) * (f.width - kMarginLeft - kMarginRight); }
  double py(double y) const { return f.height - kMarginBottom - (y - y0) / (y1 - y0) * (f.height - kMarginTop - kMarginBottom); }
};

Axes fit_axes(const std::vector<Series>& series, const PlotFrame& f) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double x : s.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
    for (double y : s.y) {
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double py = 0.05 * (y1 - y0);
  return {x0, x1, y0 - py, y1 + py, f};
}

void open_svg(std::ostringstream& out, const Axes& a) {
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << a.f.width << "\" height=\"" << a.f.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << a.f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(a.f.title)
      << "</text>\n";
  const double left = kMarginLeft, right = a.f.width - kMarginRight;
  const double top = kMarginTop, bottom = a.f.height - kMarginBottom;
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\"" << bottom - top
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = a.x0 + (a.x1 - a.x0) * i / 4.0;
    const double yv = a.y0 + (a.y1 - a.y0) * i / 4.0;
    out << "<text x=\"" << a.px(xv) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">" << std::setprecision(3)
        << std::defaultfloat << xv << std::fixed << std::setprecision(2) << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << a.py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3)
        << std::defaultfloat << yv << std::fixed << std::setprecision(2) << "</text>\n";
  }
  out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << a.f.height - 8 << "\" text-anchor=\"middle\">"
      << escape(a.f.x_label) << "</text>\n";
  out << "<text transform=\"translate(14," << (top + bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(a.f.y_label) << "</text>\n";
}

void legend(std::ostringstream& out, const std::vector<Series>& series, const Axes& a) {
  const double x = a.f.width - kMarginRight + 12;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kMarginTop + 14 + 18 * static_cast<double>(i);
    out << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[i % std::size(kPalette)] << "\"/>\n";
    out << "<text x=\"" << x + 16 << "\" y=\"" << y << "\">" << escape(series[i].name) << "</text>\n";
  }
}

}  // namespace

std::string svg_line_plot(const std::vector<Series>& series, const PlotFrame& frame) {
  const Axes a = fit_axes(series, frame);
  std::ostringstream out;
  open_svg(out, a);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.x.size() != s.y.size()) throw std::invalid_argument("svg_line_plot: x/y length mismatch");
    out << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kPalette[i % std::size(kPalette)]
        << "\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) out << a.px(s.x[k]) << ',' << a.py(s.y[k]) << ' ';
    out << "\"/>\n";
  }
  legend(out, series, a);
  out << "</svg>\n";
  return out.str();
}

std::string svg_scatter(const std::vector<Series>& series, const PlotFrame& frame) {
  const Axes a = fit_axes(series, frame);
  std::ostringstream out;
  open_svg(out, a);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.x.size() != s.y.size()) throw std::invalid_argument("svg_scatter: x/y length mismatch");
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      out << "<circle r=\"2.5\" fill-opacity=\"0.6\" fill=\"" << kPalette[i % std::size(kPalette)] << "\" cx=\""
          << a.px(s.x[k]) << "\" cy=\"" << a.py(s.y[k]) << "\"/>\n";
    }
  }
  legend(out, series, a);
  out << "</svg>\n";
  return out.str();
}

std::string strike_scatter_svg(const EvalReport& report, ServeRange range, const TableGeometry& table) {
  Series pts{to_string(range) + " strikes", {}, {}};
  for (const auto& s : report.strikes) {
    if (s.range != range) continue;
    pts.x.push_back(s.p.x());
    pts.y.push_back(s.p.y());
  }
  // Table corners on the robot half pin the axes to a common frame.
  Series edge{"table (robot half)", {table.net_x, table.own_end(), table.own_end(), table.net_x, table.net_x},
              {-table.half_width(), -table.half_width(), table.half_width(), table.half_width(), -table.half_width()}};
  Series frame_pts{"", {table.net_x, table.own_end() + 1.5}, {-1.2, 1.2}};
  const Axes a = fit_axes({pts, edge, frame_pts}, {"Successful strike points: " + to_string(range), "x (m)", "y (m)"});
  std::ostringstream out;
  open_svg(out, a);
  out << "<polyline fill=\"#e8f0e8\" stroke=\"#2ca02c\" points=\"";
  for (std::size_t k = 0; k < edge.x.size(); ++k) out << a.px(edge.x[k]) << ',' << a.py(edge.y[k]) << ' ';
  out << "\"/>\n";
  for (std::size_t k = 0; k < pts.x.size(); ++k) {
    out << "<circle r=\"2.5\" fill-opacity=\"0.6\" fill=\"" << kPalette[0] << "\" cx=\"" << a.px(pts.x[k])
        << "\" cy=\"" << a.py(pts.y[k]) << "\"/>\n";
  }
  legend(out, {pts, edge}, a);
  out << "</svg>\n";
  return out.str();
}

std::string learning_curves_svg(const std::vector<std::pair<std::string, std::vector<CurveRow>>>& runs,
                                bool success) {
  std::vector<Series> series;
  for (const auto& [name, rows] : runs) {
    Series s{name, {}, {}};
    for (const auto& r : rows) {
      s.x.push_back(r.update);
      s.y.push_back(success ? r.success_rate : r.hit_rate);
    }
    series.push_back(std::move(s));
  }
  return svg_line_plot(series, {success ? "Success rate" : "Hit rate", "update", success ? "success rate" : "hit rate"});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

}  // namespace pingpong

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pingpong/evaluate.hpp"
#include "pingpong/ppo.hpp"

namespace pingpong {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotFrame {
  std::string title;
  std::string x_label;
  std::string y_label;
  double width = 640;
  double height = 400;
};

// Polylines for each series over shared, padded axes.
std::string svg_line_plot(const std::vector<Series>& series, const PlotFrame& frame);

// One dot per point; series are told apart by color.
std::string svg_scatter(const std::vector<Series>& series, const PlotFrame& frame);

// Top view of successful strike points per serve range, with the robot-half
// table edge drawn for reference.
std::string strike_scatter_svg(const EvalReport& report, ServeRange range, const TableGeometry& table);

std::string learning_curves_svg(const std::vector<std::pair<std::string, std::vector<CurveRow>>>& runs,
                                bool success);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pingpong

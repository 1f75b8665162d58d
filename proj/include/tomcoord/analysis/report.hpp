#pragma once

#include <string>
#include <vector>

#include "tomcoord/analysis/metrics.hpp"

namespace tomcoord::analysis {

struct Series {
  std::string label;
  std::vector<CurvePoint> points;
};

// Line chart with a shaded CI band per series.
std::string curve_svg(const std::vector<Series>& series, const std::string& title, const std::string& y_label);

struct ScatterPoint {
  std::string label;
  double x = 0.0;
  double y = 0.0;
};
std::string scatter_svg(const std::vector<ScatterPoint>& points, const std::string& title, const std::string& x_label,
                        const std::string& y_label);

// step,<label>_mean,<label>_lo,<label>_hi,...
std::string curves_csv(const std::vector<Series>& series);
std::string cost_points_csv(const std::vector<CostPointsRow>& rows);

// Throws std::runtime_error when the file cannot be written.
void write_text(const std::string& path, const std::string& text);

}  // namespace tomcoord::analysis

#include "tomcoord/analysis/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tomcoord::analysis {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

Frame pad(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const double dy = 0.05 * (y1 - y0);
  return {x0, x1, y0 - dy, y1 + dy};
}

void header(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& x_label,
            const std::string& y_label) {
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\""
    << kH - kBottom << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = f.y0 + (f.y1 - f.y0) * t / 4.0;
    const double x = f.x0 + (f.x1 - f.x0) * t / 4.0;
    o << "<text x=\"" << kLeft - 5 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
      << std::setprecision(3) << y << std::setprecision(2) << "</text>\n";
    o << "<text x=\"" << f.px(x) << "\" y=\"" << kH - kBottom + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << std::setprecision(3) << x << std::setprecision(2) << "</text>\n";
  }
  o << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 10
    << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(x_label) << "</text>\n";
  o << "<text x=\"15\" y=\"" << (kTop + kH - kBottom) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
    << "transform=\"rotate(-90 15 " << (kTop + kH - kBottom) / 2 << ")\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& o, std::size_t i, const std::string& label) {
  const double y = kTop + 18.0 * static_cast<double>(i);
  const char* c = kColors[i % std::size(kColors)];
  o << "<rect x=\"" << kW - kRight + 10 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\"" << c
    << "\"/>\n";
  o << "<text x=\"" << kW - kRight + 28 << "\" y=\"" << y + 10 << "\" font-size=\"11\">" << escape(label)
    << "</text>\n";
}

}  // namespace

std::string curve_svg(const std::vector<Series>& series, const std::string& title, const std::string& y_label) {
  double x0 = std::numeric_limits<double>::max(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      x0 = std::min(x0, static_cast<double>(p.step));
      x1 = std::max(x1, static_cast<double>(p.step));
      y0 = std::min(y0, p.ci.lo);
      y1 = std::max(y1, p.ci.hi);
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const Frame f = pad(x0, x1, y0, y1);
  std::ostringstream o;
  header(o, f, title, "step", y_label);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& pts = series[i].points;
    const char* c = kColors[i % std::size(kColors)];
    if (!pts.empty()) {
      o << "<polygon fill=\"" << c << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (const auto& p : pts) o << f.px(p.step) << ',' << f.py(p.ci.hi) << ' ';
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) o << f.px(it->step) << ',' << f.py(it->ci.lo) << ' ';
      o << "\"/>\n<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : pts) o << f.px(p.step) << ',' << f.py(p.ci.mean) << ' ';
      o << "\"/>\n";
    }
    legend(o, i, series[i].label);
  }
  o << "</svg>\n";
  return o.str();
}

std::string scatter_svg(const std::vector<ScatterPoint>& points, const std::string& title, const std::string& x_label,
                        const std::string& y_label) {
  double x0 = std::numeric_limits<double>::max(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  if (points.empty()) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const double dx = 0.05 * std::max(x1 - x0, 1e-9);
  const Frame f = pad(x0 - dx, x1 + dx, y0, y1);
  std::ostringstream o;
  header(o, f, title, x_label, y_label);
  for (std::size_t i = 0; i < points.size(); ++i) {
    o << "<circle cx=\"" << f.px(points[i].x) << "\" cy=\"" << f.py(points[i].y) << "\" r=\"5\" fill=\""
      << kColors[i % std::size(kColors)] << "\"/>\n";
    legend(o, i, points[i].label);
  }
  o << "</svg>\n";
  return o.str();
}

std::string curves_csv(const std::vector<Series>& series) {
  std::ostringstream o;
  o << "step";
  for (const auto& s : series) o << ',' << s.label << "_mean," << s.label << "_lo," << s.label << "_hi";
  o << '\n';
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.points.size());
  o << std::setprecision(6);
  for (std::size_t k = 0; k < n; ++k) {
    o << k + 1;
    for (const auto& s : series) {
      if (k < s.points.size()) {
        const auto& c = s.points[k].ci;
        o << ',' << c.mean << ',' << c.lo << ',' << c.hi;
      } else {
        o << ",,,";
      }
    }
    o << '\n';
  }
  return o.str();
}

std::string cost_points_csv(const std::vector<CostPointsRow>& rows) {
  std::ostringstream o;
  o << "speaker,kappa,sessions,points,instruction_length,instruction_cost,step_cost,empty,level1,level2,level3,"
       "level4\n";
  o << std::setprecision(6);
  for (const auto& r : rows) {
    o << r.speaker << ',' << r.kappa << ',' << r.sessions << ',' << r.points << ',' << r.instruction_length << ','
      << r.instruction_cost << ',' << r.step_cost;
    for (double s : r.level_share) o << ',' << s;
    o << '\n';
  }
  return o.str();
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace tomcoord::analysis

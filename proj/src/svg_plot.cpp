#include "cfb/svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cfb {

namespace {

constexpr double kWidth = 840, kHeight = 520;
constexpr double kLeft = 70, kRight = 30, kTop = 40, kBottom = 60;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* curve_color(const std::string& name) {
  if (name == kCurveD1) return "#1f4fd8";    // blue
  if (name == kCurveD2) return "#1a9641";    // green
  if (name == kCurveUnion) return "#d7191c"; // red
  return "#777777";
}

std::string curve_label(const std::string& name) {
  if (name == kCurveD1) return "chi(D1, D1, t)";
  if (name == kCurveD2) return "chi(D2, D2, t)";
  if (name == kCurveUnion) return "chi(D2, D1 u D2, t)";
  return name;
}

}  // namespace

std::string render_run_svg(const RunRecord& rec) {
  long x_max = 0;
  bool any_points = false;
  for (const Curve& c : rec.curves)
    for (const CurvePoint& p : c.points) {
      any_points = true;
      x_max = std::max(x_max, p.iter);
    }
  if (!any_points) throw std::invalid_argument("plot: record has no curve points");
  x_max = std::max(x_max, rec.t_max);

  auto sx = [&](double iter) { return kLeft + iter / double(x_max) * kPlotW; };
  auto sy = [&](double acc) { return kTop + (1.0 - acc) * kPlotH; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // retraining window
  if (x_max > rec.t_max)
    os << "<rect x=\"" << num(sx(double(rec.t_max))) << "\" y=\"" << num(kTop) << "\" width=\""
       << num(sx(double(x_max)) - sx(double(rec.t_max))) << "\" height=\"" << num(kPlotH)
       << "\" fill=\"#d9d9d9\"/>\n";

  // gridlines and y ticks
  for (int i = 0; i <= 10; ++i) {
    const double acc = i / 10.0;
    os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(sy(acc)) << "\" x2=\""
       << num(kLeft + kPlotW) << "\" y2=\"" << num(sy(acc))
       << "\" stroke=\"#eeeeee\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(sy(acc) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << num(acc)
       << "</text>\n";
  }
  // x ticks at fifths of the range
  for (int i = 0; i <= 5; ++i) {
    const double it = x_max * i / 5.0;
    os << "<line x1=\"" << num(sx(it)) << "\" y1=\"" << num(kTop + kPlotH) << "\" x2=\""
       << num(sx(it)) << "\" y2=\"" << num(kTop + kPlotH + 5)
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << num(sx(it)) << "\" y=\"" << num(kTop + kPlotH + 20)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << long(it) << "</text>\n";
  }

  // frame
  os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(kPlotW)
     << "\" height=\"" << num(kPlotH)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // axis labels
  os << "<text x=\"" << num(kLeft + kPlotW / 2) << "\" y=\"" << num(kHeight - 15)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">iteration"
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << num(kTop + kPlotH / 2)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
     << "transform=\"rotate(-90 18 " << num(kTop + kPlotH / 2) << ")\">accuracy</text>\n";

  // curves
  for (const Curve& c : rec.curves) {
    if (c.points.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << curve_color(c.name)
       << "\" stroke-width=\"1.8\" points=\"";
    for (const CurvePoint& p : c.points)
      os << num(sx(double(p.iter))) << "," << num(sy(p.acc)) << " ";
    os << "\"/>\n";
  }

  // legend, one entry per curve actually present
  double ly = kTop + 14;
  for (const Curve& c : rec.curves) {
    if (c.points.empty()) continue;
    const double lx = kLeft + kPlotW - 190;
    os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 26)
       << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << curve_color(c.name)
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(lx + 32) << "\" y=\"" << num(ly)
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << curve_label(c.name)
       << "</text>\n";
    ly += 18;
  }

  os << "</svg>\n";
  return os.str();
}

void write_run_svg(const RunRecord& rec, const std::filesystem::path& file) {
  const std::string svg = render_run_svg(rec);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("plot: cannot write " + file.string());
  out << svg;
}

}  // namespace cfb

#include "sbc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sbc/error.hpp"

namespace sbc {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 78;
constexpr double kRight = 24;
constexpr double kTop = 44;
constexpr double kBottom = 58;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

std::string escape(const std::string &s) {
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
  double ymax;
  double x(double u) const { return kLeft + u * (kWidth - kLeft - kRight); }
  double y(double v) const { return kTop + (ymax - v) / (2 * ymax) * (kHeight - kTop - kBottom); }
};

// Step path through (grid_k, values_k), holding each value on (u_{k-1}, u_k].
std::string step_points(const Frame &f, const Eigen::VectorXd &grid, const Eigen::VectorXd &values) {
  std::string pts;
  double prev = 0.0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    pts += num(f.x(prev)) + "," + num(f.y(values(k))) + " ";
    pts += num(f.x(grid(k))) + "," + num(f.y(values(k))) + " ";
    prev = grid(k);
  }
  return pts;
}

} // namespace

std::string render_plot(const EcdfDiffCurve &curve, const Envelope &envelope,
                        const std::string &quantity) {
  if (curve.N != envelope.N || (curve.S != 0 && curve.S != envelope.S))
    throw Error("render_plot: curve (N=" + std::to_string(curve.N) + ", S=" +
                std::to_string(curve.S) + ") does not match envelope (N=" +
                std::to_string(envelope.N) + ", S=" + std::to_string(envelope.S) + ")");
  if (curve.grid.size() == 0 || curve.grid.size() != curve.values.size())
    throw Error("render_plot: malformed curve");

  double extent = 0.05;
  for (Eigen::Index k = 0; k < curve.values.size(); ++k) extent = std::max(extent, std::abs(curve.values(k)));
  for (Eigen::Index k = 0; k < envelope.lower.size(); ++k)
    extent = std::max({extent, std::abs(envelope.lower(k)), std::abs(envelope.upper(k))});
  const Frame f{extent * 1.15};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Band: upper edge left to right, lower edge back.
  std::string band = step_points(f, envelope.grid, envelope.upper);
  std::string lower_pts;
  for (Eigen::Index k = envelope.grid.size() - 1; k >= 0; --k) {
    const double left = k > 0 ? envelope.grid(k - 1) : 0.0;
    lower_pts += num(f.x(envelope.grid(k))) + "," + num(f.y(envelope.lower(k))) + " ";
    lower_pts += num(f.x(left)) + "," + num(f.y(envelope.lower(k))) + " ";
  }
  band += lower_pts;
  band.pop_back();
  svg << "<polygon class=\"band\" points=\"" << band << "\" fill=\"#c6dbef\" stroke=\"#6baed6\" stroke-width=\"0.8\"/>\n";

  // Axes, zero line and ticks.
  const double x0 = f.x(0.0);
  const double x1 = f.x(1.0);
  const double yb = kHeight - kBottom;
  svg << "<line x1=\"" << num(x0) << "\" y1=\"" << num(f.y(0.0)) << "\" x2=\"" << num(x1) << "\" y2=\""
      << num(f.y(0.0)) << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
  svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(double(kTop)) << "\" width=\"" << num(x1 - x0)
      << "\" height=\"" << num(yb - kTop) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double u = t / 4.0;
    svg << "<line x1=\"" << num(f.x(u)) << "\" y1=\"" << num(yb) << "\" x2=\"" << num(f.x(u))
        << "\" y2=\"" << num(yb + 5) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << num(f.x(u)) << "\" y=\"" << num(yb + 19) << "\" font-size=\"12\" text-anchor=\"middle\">"
        << num(u) << "</text>\n";
  }
  for (int t = -2; t <= 2; ++t) {
    const double v = f.ymax * t / 2.5;
    svg << "<line x1=\"" << num(x0 - 5) << "\" y1=\"" << num(f.y(v)) << "\" x2=\"" << num(x0)
        << "\" y2=\"" << num(f.y(v)) << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << num(x0 - 8) << "\" y=\"" << num(f.y(v) + 4) << "\" font-size=\"12\" text-anchor=\"end\">"
        << num(v) << "</text>\n";
  }

  svg << "<polyline class=\"ecdf-difference\" points=\"" << num(f.x(0.0)) << "," << num(f.y(0.0)) << " "
      << step_points(f, curve.grid, curve.values) << "\" fill=\"none\" stroke=\"#08306b\" stroke-width=\"1.6\"/>\n";

  svg << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 14)
      << "\" font-size=\"14\" text-anchor=\"middle\">PIT</text>\n"
      << "<text x=\"18\" y=\"" << num((kTop + yb) / 2) << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << num((kTop + yb) / 2) << ")\">ECDF difference</text>\n"
      << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"26\" font-size=\"16\" text-anchor=\"middle\">"
      << escape(quantity) << "</text>\n"
      << "<text x=\"" << num(x1 - 6) << "\" y=\"" << num(kTop + 16)
      << "\" font-size=\"12\" text-anchor=\"end\">N = " << curve.N << ", S = " << envelope.S << "</text>\n"
      << "</svg>\n";
  return svg.str();
}

} // namespace sbc

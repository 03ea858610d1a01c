#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "shaped_transfer/curves.hpp"
#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

namespace {

// Fixed palette: no-transfer blue, direct-transfer green, shaped red.
std::string color_for(const std::string& method, std::size_t index) {
  if (method == "scratch") return "#1f77b4";
  if (method == "direct") return "#2ca02c";
  if (method == "shaped") return "#d62728";
  static const char* extra[] = {"#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return extra[index % 4];
}

std::string label_for(const std::string& method) {
  if (method == "scratch") return "no transfer";
  if (method == "direct") return "direct transfer";
  if (method == "shaped") return "reward shaping";
  return method;
}

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
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Round-ish tick spacing covering [lo, hi] with about `n` ticks.
double tick_step(double lo, double hi, int n) {
  const double raw = (hi - lo) / n;
  if (raw <= 0.0) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::string render_plot(const std::vector<MethodCurve>& curves, PlotAlignment alignment, const std::string& title) {
  require(!curves.empty(), errc::contract, "nothing to plot");
  const double width = 800, height = 480, left = 80, right = 180, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  auto x_of = [&](const EpisodeStats& s) {
    return alignment == PlotAlignment::episode ? static_cast<double>(s.episode) : s.mean_env_steps;
  };
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& c : curves)
    for (const auto& s : c.stats) {
      x_lo = std::min(x_lo, x_of(s));
      x_hi = std::max(x_hi, x_of(s));
      y_lo = std::min(y_lo, s.mean - s.stddev);
      y_hi = std::max(y_hi, s.mean + s.stddev);
    }
  if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  if (x_hi <= x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) y_hi = y_lo + 1;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<metadata>error bars: +-1 population standard deviation across seeds; "
      << "curves: trailing moving average per seed; x: "
      << (alignment == PlotAlignment::episode ? "episode index" : "mean cumulative environment steps")
      << "</metadata>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  if (!title.empty())
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"16\">" << escape(title) << "</text>\n";

  // Axes and ticks.
  svg << "<g class=\"axes\" stroke=\"#333\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\"/>\n";
  const double xs = tick_step(x_lo, x_hi, 8);
  for (double x = std::ceil(x_lo / xs) * xs; x <= x_hi; x += xs)
    svg << "<line x1=\"" << num(px(x)) << "\" y1=\"" << top + plot_h << "\" x2=\"" << num(px(x)) << "\" y2=\""
        << top + plot_h + 5 << "\"/><text x=\"" << num(px(x)) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" stroke=\"none\">" << num(x) << "</text>\n";
  const double ys = tick_step(y_lo, y_hi, 6);
  for (double y = std::ceil(y_lo / ys) * ys; y <= y_hi; y += ys)
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << num(py(y)) << "\" x2=\"" << left << "\" y2=\"" << num(py(y))
        << "\"/><text x=\"" << left - 8 << "\" y=\"" << num(py(y) + 4)
        << "\" text-anchor=\"end\" stroke=\"none\">" << num(y) << "</text>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\" stroke=\"none\">"
      << (alignment == PlotAlignment::episode ? "episode" : "environment steps") << "</text>\n"
      << "<text x=\"18\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" stroke=\"none\" "
      << "transform=\"rotate(-90 18 " << top + plot_h / 2 << ")\">episode reward</text>\n"
      << "</g>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const std::string color = color_for(c.method, i);
    svg << "<g class=\"series\" data-method=\"" << escape(c.method) << "\">\n";
    svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& s : c.stats) svg << num(px(x_of(s))) << ',' << num(py(s.mean + s.stddev)) << ' ';
    for (auto it = c.stats.rbegin(); it != c.stats.rend(); ++it)
      svg << num(px(x_of(*it))) << ',' << num(py(it->mean - it->stddev)) << ' ';
    svg << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& s : c.stats) svg << num(px(x_of(s))) << ',' << num(py(s.mean)) << ' ';
    svg << "\"/>\n</g>\n";
    const double ly = top + 20 + 22 * static_cast<double>(i);
    svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\"><line x1=\"" << left + plot_w + 15
        << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 40 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"3\"/><text x=\"" << left + plot_w + 46 << "\" y=\"" << ly + 4 << "\">"
        << escape(label_for(c.method)) << "</text></g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_plot(const std::vector<MethodCurve>& curves, const std::string& path, PlotAlignment alignment,
               const std::string& title) {
  const std::string svg = render_plot(curves, alignment, title);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), errc::io, "cannot write plot '" + path + "'");
  out << svg;
  require(static_cast<bool>(out), errc::io, "failed writing plot '" + path + "'");
}

}  // namespace shaped_transfer

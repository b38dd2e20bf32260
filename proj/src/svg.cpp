#include "rfkit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rfkit/error.hpp"

namespace rfkit::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
    << "\" viewBox=\"0 0 " << fmt(w) << ' ' << fmt(h) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

struct Axis {
  double lo, hi;
  bool log;
  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
};

Axis make_axis(double lo, double hi, bool log) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) lo = 0, hi = 1;
  if (log) {
    lo = std::max(lo, 1e-300);
    hi = std::max(hi, lo * 10);
  }
  if (hi <= lo) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, log};
}

std::string color_for(double v, double vmax) {
  const double t = vmax > 0.0 ? std::clamp(v / vmax, -1.0, 1.0) : 0.0;
  int r = 255, g = 255, b = 255;
  if (t > 0) {
    g = b = static_cast<int>(std::lround(255 * (1 - t)));
  } else {
    r = g = static_cast<int>(std::lround(255 * (1 + t)));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string render(const LinePlot& plot) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (plot.log_x && s.x[i] <= 0) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      const double lo = s.low.empty() ? s.y[i] : std::min(s.y[i], s.low[i]);
      const double hi = s.high.empty() ? s.y[i] : std::max(s.y[i], s.high[i]);
      if (!plot.log_y || lo > 0) ylo = std::min(ylo, lo);
      yhi = std::max(yhi, hi);
    }
  }
  const Axis ax = make_axis(xlo, xhi, plot.log_x);
  const Axis ay = make_axis(ylo, yhi, plot.log_y);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;

  std::ostringstream s;
  s << header(kWidth, kHeight);
  s << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(plot.title)
    << "</text>\n";
  s << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0) << "\" height=\""
    << fmt(y0 - y1) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = ax.log ? std::pow(10.0, std::log10(ax.lo) + i * (std::log10(ax.hi) - std::log10(ax.lo)) / 4)
                             : ax.lo + i * (ax.hi - ax.lo) / 4;
    const double fy = ay.log ? std::pow(10.0, std::log10(ay.lo) + i * (std::log10(ay.hi) - std::log10(ay.lo)) / 4)
                             : ay.lo + i * (ay.hi - ay.lo) / 4;
    const double px = ax.map(fx, x0, x1), py = ay.map(fy, y0, y1);
    s << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 16) << "\" text-anchor=\"middle\">" << fmt(fx) << "</text>\n";
    s << "<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(py + 4) << "\" text-anchor=\"end\">" << fmt(fy) << "</text>\n";
  }
  s << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 12) << "\" text-anchor=\"middle\">"
    << escape(plot.xlabel) << "</text>\n";
  s << "<text transform=\"translate(16," << fmt((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(plot.ylabel) << "</text>\n";

  if (plot.vline && *plot.vline >= ax.lo && *plot.vline <= ax.hi) {
    const double px = ax.map(*plot.vline, x0, x1);
    s << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y0)
      << "\" stroke=\"gray\" stroke-dasharray=\"3,3\"/>\n";
  }

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& ser = plot.series[k];
    const char* col = kPalette[k % std::size(kPalette)];
    auto point_ok = [&](std::size_t i, double y) {
      return std::isfinite(ser.x[i]) && std::isfinite(y) && (!plot.log_x || ser.x[i] > 0) && (!plot.log_y || y > 0);
    };
    if (!ser.low.empty() && ser.low.size() == ser.x.size() && ser.high.size() == ser.x.size()) {
      std::ostringstream pts;
      for (std::size_t i = 0; i < ser.x.size(); ++i)
        if (point_ok(i, ser.high[i])) pts << fmt(ax.map(ser.x[i], x0, x1)) << ',' << fmt(ay.map(ser.high[i], y0, y1)) << ' ';
      for (std::size_t i = ser.x.size(); i-- > 0;)
        if (point_ok(i, ser.low[i])) pts << fmt(ax.map(ser.x[i], x0, x1)) << ',' << fmt(ay.map(ser.low[i], y0, y1)) << ' ';
      s << "<polygon points=\"" << pts.str() << "\" fill=\"" << col << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::ostringstream pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i)
      if (point_ok(i, ser.y[i])) pts << fmt(ax.map(ser.x[i], x0, x1)) << ',' << fmt(ay.map(ser.y[i], y0, y1)) << ' ';
    s << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(k);
    s << "<line x1=\"" << fmt(x1 + 10) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(x1 + 30) << "\" y2=\""
      << fmt(ly - 4) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << fmt(x1 + 34) << "\" y=\"" << fmt(ly) << "\">" << escape(ser.name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string heatmap(const std::string& title, const Matrix& values) {
  const double cell = std::clamp(400.0 / static_cast<double>(std::max(values.rows(), values.cols())), 2.0, 24.0);
  const double w = 2 * 30 + cell * static_cast<double>(values.cols());
  const double h = 50 + 30 + cell * static_cast<double>(values.rows());
  const double vmax = values.size() > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"" << fmt(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j)
      s << "<rect x=\"" << fmt(30 + cell * static_cast<double>(j)) << "\" y=\"" << fmt(40 + cell * static_cast<double>(i))
        << "\" width=\"" << fmt(cell) << "\" height=\"" << fmt(cell) << "\" fill=\"" << color_for(values(i, j), vmax)
        << "\"/>\n";
  s << "<text x=\"30\" y=\"" << fmt(h - 12) << "\">max |value| = " << fmt(vmax) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string histogram(const std::string& title, const std::vector<double>& values, int bins,
                      std::optional<double> marker) {
  if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
  double lo = values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
  double hi = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
  if (marker) {
    lo = std::min(lo, *marker);
    hi = std::max(hi, *marker);
  }
  const Axis ax = make_axis(lo, hi, false);
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<int>((v - ax.lo) / (ax.hi - ax.lo) * bins);
    counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  const int cmax = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::ostringstream s;
  s << header(kWidth, kHeight);
  s << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  const double bw = (x1 - x0) / bins;
  for (int b = 0; b < bins; ++b) {
    const double bh = (y0 - y1) * counts[static_cast<std::size_t>(b)] / cmax;
    s << "<rect x=\"" << fmt(x0 + b * bw) << "\" y=\"" << fmt(y0 - bh) << "\" width=\"" << fmt(bw) << "\" height=\""
      << fmt(bh) << "\" fill=\"#999999\" stroke=\"white\"/>\n";
  }
  s << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 + 16) << "\">" << fmt(ax.lo) << "</text>\n";
  s << "<text x=\"" << fmt(x1) << "\" y=\"" << fmt(y0 + 16) << "\" text-anchor=\"end\">" << fmt(ax.hi) << "</text>\n";
  if (marker) {
    const double px = ax.map(*marker, x0, x1);
    s << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y0)
      << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write(const std::filesystem::path& path, const std::string& document) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << document;
}

}  // namespace rfkit::svg

#include "grpboost/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "grpboost/io.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.04 * (hi - lo);
  lo -= pad;
  hi += pad;
}

void axes(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& xl,
          const std::string& yl) {
  o << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
    << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << f.px(xv) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << format_double(std::round(xv * 1000) / 1000) << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << format_double(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  o << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << escape(xl) << "</text>\n";
  o << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << kHeight / 2 << ")\">" << escape(yl) << "</text>\n";
}

}  // namespace

std::string svg_line_plot(const PlotSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto take = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  };
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      take(s.x[i], s.y[i]);
      if (i < s.lower.size()) take(s.x[i], s.lower[i]);
      if (i < s.upper.size()) take(s.x[i], s.upper[i]);
    }
  }
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1};

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  o << "<metadata>\nseries,x,y,lower,upper\n";
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << escape(s.name) << ',' << format_double(s.x[i]) << ',' << format_double(s.y[i]) << ','
        << (i < s.lower.size() ? format_double(s.lower[i]) : "") << ','
        << (i < s.upper.size() ? format_double(s.upper[i]) : "") << '\n';
    }
  }
  o << "</metadata>\n";
  axes(o, f, spec.title, spec.x_label, spec.y_label);
  if (spec.identity_line) {
    const double lo = std::max(x0, y0), hi = std::min(x1, y1);
    if (hi > lo) {
      o << "<line x1=\"" << f.px(lo) << "\" y1=\"" << f.py(lo) << "\" x2=\"" << f.px(hi) << "\" y2=\"" << f.py(hi)
        << "\" stroke=\"grey\" stroke-dasharray=\"4 3\"/>\n";
    }
  }
  std::size_t c = 0;
  for (const auto& s : spec.series) {
    const char* col = kColors[c++ % 6];
    if (!s.lower.empty() && s.lower.size() == s.x.size() && s.upper.size() == s.x.size()) {
      o << "<polygon fill=\"" << col << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << f.px(s.x[i]) << ',' << f.py(s.upper[i]) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;) o << f.px(s.x[i]) << ',' << f.py(s.lower[i]) << ' ';
      o << "\"/>\n";
    }
    if (s.points) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        o << "<circle cx=\"" << f.px(s.x[i]) << "\" cy=\"" << f.py(s.y[i]) << "\" r=\"2.2\" fill=\"" << col << "\"/>\n";
      }
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (std::isfinite(s.y[i])) o << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
      }
      o << "\"/>\n";
    }
    o << "<text x=\"" << kWidth - kRight - 150 << "\" y=\"" << kTop + 14 * c << "\" font-size=\"11\" fill=\"" << col
      << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

BoxStats box_stats(const std::string& label, std::vector<double> v, double truth) {
  BoxStats b;
  b.label = label;
  b.truth = truth;
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  b.min = v.front();
  b.max = v.back();
  b.q1 = quantile_type7_sorted(v, 0.25);
  b.median = quantile_type7_sorted(v, 0.5);
  b.q3 = quantile_type7_sorted(v, 0.75);
  return b;
}

std::string svg_boxplot(const std::string& title, const std::string& y_label, const std::vector<BoxStats>& boxes) {
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& b : boxes) {
    y0 = std::min({y0, b.min, std::isfinite(b.truth) ? b.truth : b.min});
    y1 = std::max({y1, b.max, std::isfinite(b.truth) ? b.truth : b.max});
  }
  widen(y0, y1);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(boxes.size(), 1)), y0, y1};
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  o << "<metadata>\nlabel,min,q1,median,q3,max,truth\n";
  for (const auto& b : boxes) {
    o << escape(b.label) << ',' << format_double(b.min) << ',' << format_double(b.q1) << ',' << format_double(b.median)
      << ',' << format_double(b.q3) << ',' << format_double(b.max) << ',' << format_double(b.truth) << '\n';
  }
  o << "</metadata>\n";
  axes(o, f, title, "", y_label);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const double cx = f.px(i + 0.5);
    const double hw = std::max(1.0, 0.3 * (f.px(1.0) - f.px(0.0)));
    o << "<line x1=\"" << cx << "\" y1=\"" << f.py(b.min) << "\" x2=\"" << cx << "\" y2=\"" << f.py(b.max)
      << "\" stroke=\"black\"/>\n";
    o << "<rect x=\"" << cx - hw << "\" y=\"" << f.py(b.q3) << "\" width=\"" << 2 * hw << "\" height=\""
      << std::max(0.5, f.py(b.q1) - f.py(b.q3)) << "\" fill=\"#c6dbef\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << cx - hw << "\" y1=\"" << f.py(b.median) << "\" x2=\"" << cx + hw << "\" y2=\""
      << f.py(b.median) << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    if (std::isfinite(b.truth)) {
      o << "<circle cx=\"" << cx << "\" cy=\"" << f.py(b.truth) << "\" r=\"2.5\" fill=\"#d62728\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace grpboost

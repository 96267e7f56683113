#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flicker/error.hpp"
#include "flicker/stats.hpp"

// Minimal static chart writer. Output depends only on the inputs, so files
// are byte-stable across runs.
namespace flicker::svg {

inline std::string f4(double v) {
  if (!std::isfinite(v)) v = 0.0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

inline std::string xml_escape(std::string_view s) {
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

class Canvas {
 public:
  Canvas(double w, double h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
    body_ << "<rect x=\"" << f4(x) << "\" y=\"" << f4(y) << "\" width=\"" << f4(w) << "\" height=\"" << f4(h)
          << "\" fill=\"" << fill << "\"" << (extra.empty() ? "" : " " + extra) << "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333", double width = 1.0) {
    body_ << "<line x1=\"" << f4(x1) << "\" y1=\"" << f4(y1) << "\" x2=\"" << f4(x2) << "\" y2=\"" << f4(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << f4(width) << "\"/>\n";
  }
  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << f4(cx) << "\" cy=\"" << f4(cy) << "\" r=\"" << f4(r) << "\" fill=\"" << fill << "\"/>\n";
  }
  void text(double x, double y, std::string_view s, const std::string& anchor = "start", int size = 11) {
    body_ << "<text x=\"" << f4(x) << "\" y=\"" << f4(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
          << "\" font-family=\"sans-serif\">" << xml_escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f4(w_) << "\" height=\"" << f4(h_)
        << "\" viewBox=\"0 0 " << f4(w_) << " " << f4(h_) << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

/// Black (low) to yellow (high), like a magma-ish ramp but cheap.
inline std::string ramp(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 * std::min(1.0, 1.6 * t)));
  const int g = static_cast<int>(std::lround(255.0 * std::max(0.0, 1.6 * t - 0.6)));
  const int b = static_cast<int>(std::lround(80.0 * std::max(0.0, 1.0 - 2.0 * std::fabs(t - 0.35))));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

inline std::string heatmap(const Matrix& m, const std::vector<std::string>& labels, const std::string& title) {
  const double cell = 28.0, left = 50.0, top = 40.0;
  const auto n = m.rows();
  Canvas c(left + cell * static_cast<double>(m.cols()) + 20.0, top + cell * static_cast<double>(n) + 30.0);
  c.text(left, 20.0, title, "start", 13);
  const double lo = m.size() ? m.minCoeff() : 0.0, hi = m.size() ? m.maxCoeff() : 1.0;
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double x = left + cell * static_cast<double>(j), y = top + cell * static_cast<double>(i);
      c.rect(x, y, cell, cell, ramp((m(i, j) - lo) / span));
    }
    if (static_cast<std::size_t>(i) < labels.size()) c.text(left - 6.0, top + cell * (static_cast<double>(i) + 0.65), labels[i], "end");
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (static_cast<std::size_t>(j) < labels.size())
      c.text(left + cell * (static_cast<double>(j) + 0.5), top + cell * static_cast<double>(n) + 16.0, labels[j], "middle");
  return c.str();
}

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const { return a + (v - lo) / (hi > lo ? hi - lo : 1.0) * (b - a); }
};

inline Axis padded_axis(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 1.0};
  double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline std::string scatter(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<std::string>& point_labels = {}) {
  if (xs.size() != ys.size()) throw internal_error("scatter: coordinate length mismatch");
  const double W = 480, H = 360, L = 60, R = 20, T = 40, B = 50;
  Canvas c(W, H);
  c.text(L, 22, title, "start", 13);
  const auto ax = padded_axis(xs), ay = padded_axis(ys);
  c.line(L, H - B, W - R, H - B);
  c.line(L, T, L, H - B);
  c.text((L + W - R) / 2, H - 12, xlabel, "middle");
  c.text(14, (T + H - B) / 2, ylabel, "middle");
  c.text(L, H - B + 14, f4(ax.lo), "start", 9);
  c.text(W - R, H - B + 14, f4(ax.hi), "end", 9);
  c.text(L - 4, H - B, f4(ay.lo), "end", 9);
  c.text(L - 4, T + 8, f4(ay.hi), "end", 9);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = ax.map(xs[i], L, W - R), y = ay.map(ys[i], H - B, T);
    c.circle(x, y, 3.5, "#c0392b");
    if (i < point_labels.size()) c.text(x + 5, y - 5, point_labels[i], "start", 9);
  }
  return c.str();
}

struct ForestRow {
  std::string name;
  double estimate, low, high;
  bool significant;
};

inline std::string forest(const std::vector<ForestRow>& rows, const std::string& title) {
  const double W = 520, L = 140, R = 30, T = 40, row_h = 24;
  const double H = T + row_h * static_cast<double>(rows.size()) + 40;
  Canvas c(W, H);
  c.text(10, 22, title, "start", 13);
  std::vector<double> ext{0.0};
  for (const auto& r : rows) {
    ext.push_back(r.low);
    ext.push_back(r.high);
    ext.push_back(r.estimate);
  }
  const auto ax = padded_axis(ext);
  const double zero = ax.map(0.0, L, W - R);
  c.line(zero, T - 6, zero, H - 34, "#999");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double y = T + row_h * (static_cast<double>(i) + 0.5);
    c.text(L - 8, y + 4, r.name, "end");
    c.line(ax.map(r.low, L, W - R), y, ax.map(r.high, L, W - R), y, "#333", 1.5);
    c.circle(ax.map(r.estimate, L, W - R), y, 4.0, r.significant ? "#c0392b" : "#7f8c8d");
  }
  c.text(L, H - 16, f4(ax.lo), "start", 9);
  c.text(W - R, H - 16, f4(ax.hi), "end", 9);
  return c.str();
}

inline std::string histogram(const std::vector<double>& values, std::size_t bins, const std::string& title,
                             std::optional<double> marker = std::nullopt) {
  if (bins == 0) throw internal_error("histogram: zero bins");
  const double W = 480, H = 320, L = 40, R = 20, T = 40, B = 40;
  Canvas c(W, H);
  c.text(L, 22, title, "start", 13);
  std::vector<double> ext = values;
  if (marker) ext.push_back(*marker);
  const auto ax = padded_axis(ext);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - ax.lo) / (ax.hi - ax.lo) * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  const double top = static_cast<double>(std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end())));
  const double bw = (W - L - R) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double h = (H - T - B) * static_cast<double>(counts[b]) / top;
    c.rect(L + bw * static_cast<double>(b), H - B - h, bw, h, "#34495e", "stroke=\"white\"");
  }
  c.line(L, H - B, W - R, H - B);
  if (marker) {
    const double x = ax.map(*marker, L, W - R);
    c.line(x, T, x, H - B, "#c0392b", 2.0);
  }
  c.text(L, H - B + 14, f4(ax.lo), "start", 9);
  c.text(W - R, H - B + 14, f4(ax.hi), "end", 9);
  return c.str();
}

inline void write(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write " + path.string());
  out << svg;
}

}  // namespace flicker::svg

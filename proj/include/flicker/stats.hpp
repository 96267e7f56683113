#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "flicker/error.hpp"

namespace flicker {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Population (ddof = 0) standard deviation.
inline double population_sd(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

/// Column standardizer fitted on one data set and applied to others.
/// Population sd; constant columns are centered and left unscaled.
struct ZScaler {
  Vector center;
  Vector scale;

  static ZScaler fit(const Matrix& X) {
    ZScaler z;
    const double n = static_cast<double>(X.rows());
    z.center = X.colwise().mean().transpose();
    z.scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double ss = (X.col(j).array() - z.center(j)).square().sum();
      const double sd = n > 0 ? std::sqrt(ss / n) : 0.0;
      z.scale(j) = sd > 0.0 ? sd : 1.0;
    }
    return z;
  }

  Matrix transform(const Matrix& X) const {
    Matrix out = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      out.col(j) = (X.col(j).array() - center(j)) / scale(j);
    return out;
  }

  Matrix inverse_transform(const Matrix& Z) const {
    Matrix out = Z;
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      out.col(j) = Z.col(j).array() * scale(j) + center(j);
    return out;
  }
};

inline Vector zscore(const Vector& x) {
  Matrix m = x;
  return ZScaler::fit(m).transform(m).col(0);
}

/// Linear-interpolation quantile (R type 7 / numpy default), q in [0, 1].
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw internal_error("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - w) + values[hi] * w;
}

/// `count` values log-spaced from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw input_error("correlation undefined for a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) return std::nan("");
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

inline double t_quantile(double prob, double df) {
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, prob);
}

}  // namespace flicker

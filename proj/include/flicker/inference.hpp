#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "flicker/error.hpp"
#include "flicker/parallel.hpp"
#include "flicker/random.hpp"
#include "flicker/stats.hpp"

namespace flicker::inference {

struct Coefficient {
  std::string name;
  double beta = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

/// OLS fit; coefficients[0] is the intercept.
struct GlmResult {
  std::vector<Coefficient> coefficients;
  double residual_df = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;

  const Coefficient& operator[](const std::string& name) const {
    for (const auto& c : coefficients)
      if (c.name == name) return c;
    throw input_error("no coefficient named '" + name + "'");
  }
};

inline Matrix with_intercept(const Matrix& X) {
  Matrix D(X.rows(), X.cols() + 1);
  D.col(0).setOnes();
  D.rightCols(X.cols()) = X;
  return D;
}

/// Ordinary least squares via QR with an unpenalized intercept. SEs from
/// sigma^2 (X'X)^-1; p-values from Student t with n - p - 1 df.
/// Rank deficiency is reported by the name of a column that is linearly
/// dependent on the others.
inline GlmResult glm_fit(const Matrix& X, const Vector& y, std::vector<std::string> names = {}) {
  const auto n = X.rows(), p = X.cols();
  if (y.size() != n) throw input_error("glm_fit: X and y row counts differ");
  if (!X.allFinite() || !y.allFinite()) throw input_error("glm_fit: non-finite input");
  if (n <= p + 1) throw input_error("glm_fit: need more observations than parameters");
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  if (static_cast<Eigen::Index>(names.size()) != p) throw input_error("glm_fit: predictor name count mismatch");
  names.insert(names.begin(), "(Intercept)");

  const Matrix D = with_intercept(X);
  Eigen::ColPivHouseholderQR<Matrix> piv(D);
  piv.setThreshold(1e-10);
  if (piv.rank() < D.cols()) {
    const auto perm = piv.colsPermutation().indices();
    const auto culprit = perm(piv.rank());
    throw input_error("glm_fit: design is rank deficient; column '" + names[static_cast<std::size_t>(culprit)] +
                      "' is collinear with the others");
  }
  Eigen::HouseholderQR<Matrix> qr(D);
  const Vector beta = qr.solve(y);
  const Vector resid = y - D * beta;
  const double df = static_cast<double>(n - p - 1);
  const double sigma2 = resid.squaredNorm() / df;
  const Matrix R = qr.matrixQR().topRows(p + 1).triangularView<Eigen::Upper>();
  const Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(p + 1, p + 1));
  const Matrix cov = sigma2 * Rinv * Rinv.transpose();

  GlmResult res;
  res.n = static_cast<std::size_t>(n);
  res.residual_df = df;
  const double sst = (y.array() - y.mean()).square().sum();
  res.r2 = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst : 0.0;
  for (Eigen::Index j = 0; j <= p; ++j) {
    Coefficient c;
    c.name = names[static_cast<std::size_t>(j)];
    c.beta = beta(j);
    c.se = std::sqrt(std::max(0.0, cov(j, j)));
    c.t = c.se > 0.0 ? c.beta / c.se : (c.beta == 0.0 ? 0.0 : std::copysign(INFINITY, c.beta));
    c.p = t_two_sided_p(c.t, df);
    res.coefficients.push_back(c);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Mediation

struct Estimate {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p = 1.0;
};

struct MediationDraw {
  double acme, ade, total;
};

struct MediationResult {
  Estimate acme, ade, total, proportion;
  std::size_t n_sims = 0;      // completed bootstrap draws
  std::size_t skipped = 0;     // draws abandoned after repeated degenerate resamples
  std::vector<MediationDraw> draws;
};

struct MediationOptions {
  std::size_t n_sims = 5000;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  Matrix covariates;  // optional extra columns entering both models
};

struct PathCoefficients {
  double gamma1;  // x -> m
  double beta1;   // x -> y | m
  double beta2;   // m -> y | x
};

/// Mediator model m ~ x (+ cov) and outcome model y ~ x + m (+ cov).
inline PathCoefficients mediation_paths(const Vector& x, const Vector& m, const Vector& y, const Matrix& cov) {
  const auto n = x.size();
  const auto k = cov.cols();
  Matrix Dm(n, 2 + k), Dy(n, 3 + k);
  Dm.col(0).setOnes();
  Dm.col(1) = x;
  Dy.col(0).setOnes();
  Dy.col(1) = x;
  Dy.col(2) = m;
  if (k > 0) {
    Dm.rightCols(k) = cov;
    Dy.rightCols(k) = cov;
  }
  const Vector g = Dm.householderQr().solve(m);
  const Vector b = Dy.householderQr().solve(y);
  return {g(1), b(1), b(2)};
}

namespace detail {
inline bool constant(const Vector& v) { return v.size() == 0 || (v.array() == v(0)).all(); }

/// Two-sided bootstrap p with +1 smoothing: 2 min(P(est <= 0), P(est >= 0)).
inline double bootstrap_p(const std::vector<double>& draws) {
  const double S = static_cast<double>(draws.size());
  const double le = static_cast<double>(std::count_if(draws.begin(), draws.end(), [](double v) { return v <= 0.0; }));
  const double ge = static_cast<double>(std::count_if(draws.begin(), draws.end(), [](double v) { return v >= 0.0; }));
  return std::min(1.0, 2.0 * std::min((le + 1.0) / (S + 1.0), (ge + 1.0) / (S + 1.0)));
}

inline Estimate summarize(double point, std::vector<double> draws, double level) {
  Estimate e;
  e.estimate = point;
  std::erase_if(draws, [](double v) { return !std::isfinite(v); });
  if (draws.empty()) {
    e.ci_low = e.ci_high = e.p = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  const double tail = (1.0 - level) / 2.0;
  e.ci_low = quantile(draws, tail);
  e.ci_high = quantile(draws, 1.0 - tail);
  e.p = bootstrap_p(draws);
  return e;
}
}  // namespace detail

inline constexpr int kMediationRedraws = 10;

/// Product-of-coefficients mediation with a nonparametric bootstrap:
/// ACME = gamma1 * beta2, ADE = beta1, total = ADE + ACME.
inline MediationResult mediate(const Vector& x, const Vector& m, const Vector& y, const MediationOptions& opt = {}) {
  const auto n = x.size();
  if (m.size() != n || y.size() != n) throw input_error("mediate: x, m, y lengths differ");
  if (opt.covariates.size() > 0 && opt.covariates.rows() != n) throw input_error("mediate: covariate rows differ");
  if (!x.allFinite() || !m.allFinite() || !y.allFinite()) throw input_error("mediate: incomplete cases present");
  if (n < 4 + opt.covariates.cols()) throw input_error("mediate: too few observations");
  if (detail::constant(x) || detail::constant(m)) throw input_error("mediate: x and m must vary");
  const Matrix cov = opt.covariates.size() > 0 ? opt.covariates : Matrix(n, 0);

  const auto point = mediation_paths(x, m, y, cov);
  MediationResult res;
  const double acme = point.gamma1 * point.beta2;
  const double ade = point.beta1;
  const double total = ade + acme;

  std::vector<MediationDraw> draws(opt.n_sims);
  std::vector<char> ok(opt.n_sims, 0);
  parallel_for(opt.n_sims, [&](std::size_t s) {
    Rng rng(derive_seed(opt.seed, 0x3ed1, s));
    for (int attempt = 0; attempt <= kMediationRedraws; ++attempt) {
      const auto idx = rng.resample_indices(static_cast<std::size_t>(n));
      Vector xb(n), mb(n), yb(n);
      Matrix cb(n, cov.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]);
        xb(i) = x(r);
        mb(i) = m(r);
        yb(i) = y(r);
        if (cov.cols() > 0) cb.row(i) = cov.row(r);
      }
      if (detail::constant(xb) || detail::constant(mb)) continue;
      const auto pc = mediation_paths(xb, mb, yb, cb);
      const double a = pc.gamma1 * pc.beta2;
      draws[s] = {a, pc.beta1, pc.beta1 + a};
      ok[s] = 1;
      return;
    }
  });
  std::vector<double> da, dd, dt, dp;
  for (std::size_t s = 0; s < opt.n_sims; ++s) {
    if (!ok[s]) {
      ++res.skipped;
      continue;
    }
    res.draws.push_back(draws[s]);
    da.push_back(draws[s].acme);
    dd.push_back(draws[s].ade);
    dt.push_back(draws[s].total);
    dp.push_back(draws[s].total != 0.0 ? draws[s].acme / draws[s].total : std::numeric_limits<double>::quiet_NaN());
  }
  res.n_sims = res.draws.size();
  res.acme = detail::summarize(acme, da, opt.ci_level);
  res.ade = detail::summarize(ade, dd, opt.ci_level);
  res.total = detail::summarize(total, dt, opt.ci_level);
  res.proportion = detail::summarize(total != 0.0 ? acme / total : std::numeric_limits<double>::quiet_NaN(), dp,
                                     opt.ci_level);
  return res;
}

}  // namespace flicker::inference

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "flicker/error.hpp"
#include "flicker/parallel.hpp"
#include "flicker/random.hpp"
#include "flicker/stats.hpp"

namespace flicker::sparse {

inline double soft_threshold(double z, double gamma) {
  if (gamma < 0.0) throw input_error("soft_threshold: gamma must be >= 0");
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

inline void require_finite(const Matrix& X, const Vector& y, const char* who) {
  if (!X.allFinite() || !y.allFinite()) throw input_error(std::string(who) + ": non-finite input");
  if (X.rows() != y.size()) throw input_error(std::string(who) + ": X and y row counts differ");
}

inline Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline Vector take(const Vector& y, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline std::vector<std::size_t> nonzero(const Vector& beta) {
  std::vector<std::size_t> out;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta(j) != 0.0) out.push_back(static_cast<std::size_t>(j));
  return out;
}

// ---------------------------------------------------------------------------
// Lasso

struct LassoOptions {
  double tolerance = 1e-6;        // max coefficient change per sweep
  std::size_t max_sweeps = 100000;
  bool record_objective = false;
};

struct LassoFit {
  double alpha = 0.0;
  Vector coefficients;
  double intercept = 0.0;
  double r2_test = std::numeric_limits<double>::quiet_NaN();
  double mse_test = std::numeric_limits<double>::quiet_NaN();
  std::size_t sweeps = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // one entry per sweep when recorded

  std::vector<std::size_t> selected() const { return nonzero(coefficients); }

  Vector predict(const Matrix& X) const { return (X * coefficients).array() + intercept; }
};

/// (1 / 2n) ||y - X beta - b0||^2 + alpha ||beta||_1
inline double lasso_objective(const Matrix& X, const Vector& y, const Vector& beta, double b0, double alpha) {
  const double n = static_cast<double>(X.rows());
  const Vector r = (y - X * beta).array() - b0;
  return r.squaredNorm() / (2.0 * n) + alpha * beta.lpNorm<1>();
}

/// Smallest alpha at which every coefficient is zero.
inline double alpha_max(const Matrix& X, const Vector& y) {
  const Vector yc = y.array() - y.mean();
  const Matrix Xc = X.rowwise() - X.colwise().mean();
  return (Xc.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

/// Cyclic coordinate descent with an unpenalized intercept.
inline LassoFit lasso_fit(const Matrix& X, const Vector& y, double alpha, const LassoOptions& opt = {},
                          const Vector* warm_start = nullptr) {
  require_finite(X, y, "lasso_fit");
  if (X.rows() < 2) throw input_error("lasso_fit: need at least 2 samples");
  if (alpha < 0.0) throw input_error("lasso_fit: alpha must be >= 0");
  const double n = static_cast<double>(X.rows());
  const Eigen::RowVectorXd xm = X.colwise().mean();
  const double ym = y.mean();
  const Matrix Xc = X.rowwise() - xm;
  const Vector yc = y.array() - ym;
  const Vector col_sq = Xc.colwise().squaredNorm().transpose() / n;

  LassoFit fit;
  fit.alpha = alpha;
  fit.coefficients = warm_start ? *warm_start : Vector::Zero(X.cols());
  Vector r = yc - Xc * fit.coefficients;
  auto objective = [&] { return r.squaredNorm() / (2.0 * n) + alpha * fit.coefficients.lpNorm<1>(); };
  if (opt.record_objective) fit.objective_trace.push_back(objective());

  for (fit.sweeps = 1; fit.sweeps <= opt.max_sweeps; ++fit.sweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (col_sq(j) == 0.0) {
        fit.coefficients(j) = 0.0;
        continue;
      }
      const double old = fit.coefficients(j);
      const double rho = Xc.col(j).dot(r) / n + col_sq(j) * old;
      const double updated = soft_threshold(rho, alpha) / col_sq(j);
      if (updated != old) {
        r -= Xc.col(j) * (updated - old);
        fit.coefficients(j) = updated;
        max_change = std::max(max_change, std::fabs(updated - old));
      }
    }
    if (opt.record_objective) fit.objective_trace.push_back(objective());
    if (max_change < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.sweeps = std::min(fit.sweeps, opt.max_sweeps);
  fit.intercept = ym - xm.dot(fit.coefficients);
  return fit;
}

inline double mse(const Vector& y, const Vector& pred) { return (y - pred).squaredNorm() / static_cast<double>(y.size()); }

/// Coefficient of determination around the sample's own mean.
inline double r2_score(const Vector& y, const Vector& pred) {
  const double sst = (y.array() - y.mean()).square().sum();
  const double sse = (y - pred).squaredNorm();
  return sst > 0.0 ? 1.0 - sse / sst : 0.0;
}

/// Shuffled 80/20 style split: returns (train, test) index lists, each sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(std::size_t n, double test_fraction,
                                                                                     std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng(seed).shuffle(idx);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

/// Fold id per sample (0..k-1) after a seeded shuffle.
inline std::vector<int> kfold_assignment(std::size_t n, int k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng(seed).shuffle(idx);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[idx[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

struct LassoCvOptions {
  std::size_t n_alphas = 100;
  double alpha_min = 0.001;
  double alpha_max = 10.0;
  int folds = 10;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct LassoCvResult {
  double best_alpha = 0.0;
  LassoFit fit;                  // trained on the training split, scored on the test split
  std::vector<double> alphas;    // ascending
  std::vector<double> cv_mse;    // mean validation MSE per alpha
  std::vector<std::size_t> train, test;
  ZScaler scaler;                // fitted on the training split
};

/// Alpha chosen by k-fold CV on the training split; features standardized
/// with training-split statistics only.
inline LassoCvResult lasso_cv(const Matrix& X, const Vector& y, const LassoCvOptions& opt = {}) {
  require_finite(X, y, "lasso_cv");
  LassoCvResult res;
  std::tie(res.train, res.test) = train_test_split(static_cast<std::size_t>(X.rows()), opt.test_fraction,
                                                   derive_seed(opt.split_seed, 0x5117));
  const Matrix Xtr_raw = take_rows(X, res.train);
  res.scaler = ZScaler::fit(Xtr_raw);
  const Matrix Xtr = res.scaler.transform(Xtr_raw);
  const Vector ytr = take(y, res.train);
  const Matrix Xte = res.scaler.transform(take_rows(X, res.test));
  const Vector yte = take(y, res.test);

  res.alphas = log_grid(opt.alpha_min, opt.alpha_max, opt.n_alphas);
  const auto fold = kfold_assignment(res.train.size(), opt.folds, derive_seed(opt.split_seed, 0xf01d));
  std::vector<std::vector<double>> fold_mse(static_cast<std::size_t>(opt.folds));
  for (int f = 0; f < opt.folds; ++f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? out : in).push_back(i);
    if (in.size() < 2 || out.size() < 2) throw input_error("lasso_cv: fold " + std::to_string(f) + " has < 2 samples");
  }
  parallel_for(static_cast<std::size_t>(opt.folds), [&](std::size_t f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == static_cast<int>(f) ? out : in).push_back(i);
    const Matrix Xi = take_rows(Xtr, in), Xo = take_rows(Xtr, out);
    const Vector yi = take(ytr, in), yo = take(ytr, out);
    std::vector<double> errs(res.alphas.size());
    Vector warm = Vector::Zero(X.cols());
    for (std::size_t a = res.alphas.size(); a-- > 0;) {
      const auto fit = lasso_fit(Xi, yi, res.alphas[a], {}, &warm);
      warm = fit.coefficients;
      errs[a] = mse(yo, fit.predict(Xo));
    }
    fold_mse[f] = std::move(errs);
  });
  res.cv_mse.assign(res.alphas.size(), 0.0);
  for (const auto& errs : fold_mse)
    for (std::size_t a = 0; a < errs.size(); ++a) res.cv_mse[a] += errs[a] / opt.folds;
  std::size_t best = 0;
  for (std::size_t a = 1; a < res.cv_mse.size(); ++a)
    if (res.cv_mse[a] < res.cv_mse[best]) best = a;
  res.best_alpha = res.alphas[best];
  res.fit = lasso_fit(Xtr, ytr, res.best_alpha);
  const Vector pred = res.fit.predict(Xte);
  res.fit.mse_test = mse(yte, pred);
  res.fit.r2_test = r2_score(yte, pred);
  return res;
}

// ---------------------------------------------------------------------------
// L1 logistic regression

inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp + fn == 0) throw input_error("f1_score: no positive labels or predictions");
  if (tp == 0) return 0.0;
  const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * prec * rec / (prec + rec);
}

/// F1 of the positive class (label 1).
inline double f1_from_labels(const Vector& truth, const std::vector<int>& pred) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool t = truth(static_cast<Eigen::Index>(i)) > 0.5;
    if (pred[i] == 1 && t) ++tp;
    else if (pred[i] == 1) ++fp;
    else if (t) ++fn;
  }
  return f1_score(tp, fp, fn);
}

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

/// w_c = n / (2 n_c)
inline ClassWeights balanced_weights(const Vector& y) {
  const double n = static_cast<double>(y.size());
  const double pos = (y.array() > 0.5).count();
  const double neg = n - pos;
  if (pos == 0 || neg == 0) throw input_error("balanced class weights need both classes");
  return {n / (2.0 * neg), n / (2.0 * pos)};
}

struct LogisticOptions {
  double tolerance = 1e-5;  // relative objective change
  std::size_t max_iter = 10000;
  bool throw_on_nonconvergence = true;
};

struct LogisticFit {
  double C = 1.0;
  Vector coefficients;
  double intercept = 0.0;
  double f1_test = std::numeric_limits<double>::quiet_NaN();
  std::size_t iterations = 0;
  bool converged = false;

  Vector decision(const Matrix& X) const { return (X * coefficients).array() + intercept; }

  std::vector<int> predict(const Matrix& X) const {
    const Vector d = decision(X);
    std::vector<int> out(static_cast<std::size_t>(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i) out[static_cast<std::size_t>(i)] = d(i) > 0.0 ? 1 : 0;
    return out;
  }

  std::vector<std::size_t> selected() const { return nonzero(coefficients); }
};

namespace detail {
/// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace detail

/// Weighted log-loss sum (smooth part of the objective).
inline double weighted_logloss(const Vector& z, const Vector& y, const ClassWeights& w) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const bool pos = y(i) > 0.5;
    s += (pos ? w.positive : w.negative) * (pos ? detail::log1pexp(-z(i)) : detail::log1pexp(z(i)));
  }
  return s;
}

inline double logistic_objective(const Matrix& X, const Vector& y, const ClassWeights& w, const Vector& beta, double b0,
                                 double C) {
  const Vector z = (X * beta).array() + b0;
  return weighted_logloss(z, y, w) + beta.lpNorm<1>() / C;
}

/// Minimizes sum_i w_{y_i} logloss_i + (1/C) ||beta||_1 by proximal gradient
/// descent with backtracking line search; the intercept is not penalized.
inline LogisticFit l1_logistic_fit(const Matrix& X, const Vector& y, double C, const ClassWeights& w,
                                   const LogisticOptions& opt = {}, const LogisticFit* warm = nullptr) {
  require_finite(X, y, "l1_logistic_fit");
  const auto pos = (y.array() > 0.5).count();
  if (pos == 0 || pos == y.size()) throw input_error("l1_logistic_fit: both classes must be present");
  if (!(C > 0.0)) throw input_error("l1_logistic_fit: C must be positive");
  const double lam = 1.0 / C;
  Vector sw(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) sw(i) = y(i) > 0.5 ? w.positive : w.negative;

  LogisticFit fit;
  fit.C = C;
  fit.coefficients = warm ? warm->coefficients : Vector::Zero(X.cols());
  fit.intercept = warm ? warm->intercept : 0.0;
  Vector z = (X * fit.coefficients).array() + fit.intercept;
  double smooth = weighted_logloss(z, y, w);
  double obj = smooth + lam * fit.coefficients.lpNorm<1>();
  // 1 / (Frobenius bound on the Lipschitz constant) is always a valid step.
  const double lip = 0.25 * sw.maxCoeff() * (X.squaredNorm() + static_cast<double>(X.rows()));
  double step = 1.0 / std::max(lip, 1e-12);

  for (fit.iterations = 1; fit.iterations <= opt.max_iter; ++fit.iterations) {
    Vector resid(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) resid(i) = sw(i) * (detail::sigmoid(z(i)) - (y(i) > 0.5 ? 1.0 : 0.0));
    const Vector g = X.transpose() * resid;
    const double g0 = resid.sum();
    step *= 2.0;
    Vector nb;
    double nb0 = 0.0, nsmooth = 0.0;
    Vector nz;
    for (int bt = 0; bt < 100; ++bt) {
      nb = fit.coefficients - step * g;
      for (Eigen::Index j = 0; j < nb.size(); ++j) nb(j) = soft_threshold(nb(j), step * lam);
      nb0 = fit.intercept - step * g0;
      nz = (X * nb).array() + nb0;
      nsmooth = weighted_logloss(nz, y, w);
      const Vector d = nb - fit.coefficients;
      const double d0 = nb0 - fit.intercept;
      const double bound = smooth + g.dot(d) + g0 * d0 + (d.squaredNorm() + d0 * d0) / (2.0 * step);
      if (nsmooth <= bound + 1e-12 * std::fabs(bound)) break;
      step *= 0.5;
    }
    const double nobj = nsmooth + lam * nb.lpNorm<1>();
    const double change = std::fabs(obj - nobj);
    fit.coefficients = std::move(nb);
    fit.intercept = nb0;
    z = std::move(nz);
    smooth = nsmooth;
    obj = nobj;
    if (change <= opt.tolerance * std::max(1.0, std::fabs(nobj))) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, opt.max_iter);
  if (!fit.converged && opt.throw_on_nonconvergence)
    throw internal_error("l1_logistic_fit: no convergence after " + std::to_string(fit.iterations) + " iterations");
  return fit;
}

/// Per-class shuffled split keeping class proportions; (train, test), sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const Vector& y, double test_fraction,
                                                                                     std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> byc;
  for (Eigen::Index i = 0; i < y.size(); ++i) byc[y(i) > 0.5 ? 1 : 0].push_back(static_cast<std::size_t>(i));
  std::vector<std::size_t> train, test;
  for (int c = 0; c < 2; ++c) {
    Rng(derive_seed(seed, static_cast<std::uint64_t>(c))).shuffle(byc[c]);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(byc[c].size())));
    if (n_test == 0 || n_test == byc[c].size()) throw input_error("stratified split: class " + std::to_string(c) + " too small");
    test.insert(test.end(), byc[c].begin(), byc[c].begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), byc[c].begin() + static_cast<std::ptrdiff_t>(n_test), byc[c].end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

/// Fold id per sample with each class dealt round-robin across folds.
inline std::vector<int> stratified_folds(const Vector& y, int k, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> byc;
  for (Eigen::Index i = 0; i < y.size(); ++i) byc[y(i) > 0.5 ? 1 : 0].push_back(static_cast<std::size_t>(i));
  std::vector<int> fold(static_cast<std::size_t>(y.size()));
  std::size_t offset = 0;
  for (int c = 0; c < 2; ++c) {
    if (byc[c].size() < static_cast<std::size_t>(k))
      throw input_error("stratified folds: class " + std::to_string(c) + " has fewer members than folds");
    Rng(derive_seed(seed, static_cast<std::uint64_t>(c))).shuffle(byc[c]);
    for (std::size_t i = 0; i < byc[c].size(); ++i) fold[byc[c][i]] = static_cast<int>((i + offset) % static_cast<std::size_t>(k));
    offset += byc[c].size();
  }
  return fold;
}

struct LogisticCvOptions {
  std::size_t n_cs = 30;
  double c_min = 0.01;
  double c_max = 100.0;
  int folds = 10;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct LogisticCvResult {
  double best_C = 0.0;
  LogisticFit fit;              // trained on the training split, f1 on the test split
  std::vector<double> Cs;
  std::vector<double> cv_f1;
  std::vector<std::size_t> train, test;
  ZScaler scaler;
};

/// C chosen by mean validation F1 over stratified folds; balanced class
/// weights recomputed on every training subset.
inline LogisticCvResult logistic_cv(const Matrix& X, const Vector& y, const LogisticCvOptions& opt = {}) {
  require_finite(X, y, "logistic_cv");
  LogisticCvResult res;
  std::tie(res.train, res.test) = stratified_split(y, opt.test_fraction, derive_seed(opt.split_seed, 0x5117));
  const Matrix Xtr_raw = take_rows(X, res.train);
  res.scaler = ZScaler::fit(Xtr_raw);
  const Matrix Xtr = res.scaler.transform(Xtr_raw);
  const Vector ytr = take(y, res.train);
  const Matrix Xte = res.scaler.transform(take_rows(X, res.test));
  const Vector yte = take(y, res.test);

  res.Cs = log_grid(opt.c_min, opt.c_max, opt.n_cs);
  const auto fold = stratified_folds(ytr, opt.folds, derive_seed(opt.split_seed, 0xf01d));
  std::vector<std::vector<double>> fold_f1(static_cast<std::size_t>(opt.folds));
  LogisticOptions lo;
  lo.throw_on_nonconvergence = false;
  parallel_for(static_cast<std::size_t>(opt.folds), [&](std::size_t f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == static_cast<int>(f) ? out : in).push_back(i);
    const Matrix Xi = take_rows(Xtr, in), Xo = take_rows(Xtr, out);
    const Vector yi = take(ytr, in), yo = take(ytr, out);
    const auto w = balanced_weights(yi);
    std::vector<double> scores(res.Cs.size());
    LogisticFit prev;
    for (std::size_t c = 0; c < res.Cs.size(); ++c) {
      const auto fit = l1_logistic_fit(Xi, yi, res.Cs[c], w, lo, c ? &prev : nullptr);
      scores[c] = f1_from_labels(yo, fit.predict(Xo));
      prev = fit;
    }
    fold_f1[f] = std::move(scores);
  });
  res.cv_f1.assign(res.Cs.size(), 0.0);
  for (const auto& s : fold_f1)
    for (std::size_t c = 0; c < s.size(); ++c) res.cv_f1[c] += s[c] / opt.folds;
  std::size_t best = 0;
  for (std::size_t c = 1; c < res.cv_f1.size(); ++c)
    if (res.cv_f1[c] > res.cv_f1[best]) best = c;
  res.best_C = res.Cs[best];
  res.fit = l1_logistic_fit(Xtr, ytr, res.best_C, balanced_weights(ytr), lo);
  res.fit.f1_test = f1_from_labels(yte, res.fit.predict(Xte));
  return res;
}

enum class ImageryGroup { weak, moderate, strong };

inline constexpr std::array<ImageryGroup, 3> kImageryGroups{ImageryGroup::weak, ImageryGroup::moderate, ImageryGroup::strong};

inline std::string_view to_string(ImageryGroup g) {
  switch (g) {
    case ImageryGroup::weak: return "weak";
    case ImageryGroup::moderate: return "moderate";
    case ImageryGroup::strong: return "strong";
  }
  return "unknown";
}

/// weak 0-3, moderate 4-7, strong 8-10
inline ImageryGroup imagery_group(int vividness) {
  if (vividness < 0 || vividness > 10) throw input_error("vividness out of range: " + std::to_string(vividness));
  if (vividness <= 3) return ImageryGroup::weak;
  if (vividness <= 7) return ImageryGroup::moderate;
  return ImageryGroup::strong;
}

inline Vector group_indicator(const std::vector<int>& vividness, ImageryGroup g) {
  Vector y(static_cast<Eigen::Index>(vividness.size()));
  for (std::size_t i = 0; i < vividness.size(); ++i) y(static_cast<Eigen::Index>(i)) = imagery_group(vividness[i]) == g ? 1.0 : 0.0;
  return y;
}

struct GroupFit {
  ImageryGroup group;
  LogisticCvResult cv;
};

/// One-vs-rest classifiers for the three imagery groups.
inline std::vector<GroupFit> logistic_cv_ovr(const Matrix& X, const std::vector<int>& vividness,
                                             const LogisticCvOptions& opt = {}) {
  std::vector<GroupFit> out;
  for (auto g : kImageryGroups) {
    const Vector y = group_indicator(vividness, g);
    if ((y.array() > 0.5).count() == 0) throw input_error(std::string("imagery group '") + std::string(to_string(g)) + "' is empty");
    LogisticCvOptions o = opt;
    o.split_seed = derive_seed(opt.split_seed, static_cast<std::uint64_t>(g));
    out.push_back({g, logistic_cv(X, y, o)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

struct StabilityReport {
  std::vector<double> frequency;       // per feature, over completed iterations
  std::vector<std::size_t> retained;   // frequency >= threshold
  double threshold = 0.6;
  std::size_t iterations = 0;          // completed refits
  std::size_t skipped = 0;             // iterations abandoned after 10 redraws
};

inline constexpr int kMaxRedraws = 10;

/// Refits `fit_fn(X_b, y_b) -> coefficients` on B bootstrap resamples and
/// records how often each coefficient is nonzero. With `require_both_classes`
/// a resample lacking a class is redrawn up to 10 times, then skipped.
template <class FitFn>
StabilityReport bootstrap_stability(const Matrix& X, const Vector& y, FitFn&& fit_fn, std::size_t B, double threshold,
                                    std::uint64_t seed, bool require_both_classes = false) {
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<Vector> coefs(B);
  std::vector<char> done(B, 0);
  parallel_for(B, [&](std::size_t b) {
    Rng rng(derive_seed(seed, 0xb007, b));
    for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
      const auto idx = rng.resample_indices(n);
      Vector yb = take(y, idx);
      if (require_both_classes) {
        const auto pos = (yb.array() > 0.5).count();
        if (pos == 0 || pos == yb.size()) continue;
      }
      coefs[b] = fit_fn(take_rows(X, idx), yb);
      done[b] = 1;
      return;
    }
  });
  StabilityReport rep;
  rep.threshold = threshold;
  rep.frequency.assign(static_cast<std::size_t>(X.cols()), 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    if (!done[b]) {
      ++rep.skipped;
      continue;
    }
    ++rep.iterations;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (coefs[b](j) != 0.0) rep.frequency[static_cast<std::size_t>(j)] += 1.0;
  }
  for (std::size_t j = 0; j < rep.frequency.size(); ++j) {
    if (rep.iterations > 0) rep.frequency[j] /= static_cast<double>(rep.iterations);
    if (rep.frequency[j] >= threshold && (threshold > 0.0 || rep.frequency[j] > 0.0)) rep.retained.push_back(j);
  }
  return rep;
}

struct PermutationResult {
  double observed = 0.0;
  std::vector<double> null;
  double p_value = 1.0;
};

/// p = (1 + #{null >= observed}) / (P + 1)
inline double permutation_p_value(double observed, const std::vector<double>& null) {
  const auto ge = std::count_if(null.begin(), null.end(), [&](double v) { return v >= observed; });
  return (1.0 + static_cast<double>(ge)) / (static_cast<double>(null.size()) + 1.0);
}

/// Scores `score_fn(X, y)` on the real labels and on P uniformly permuted
/// copies (larger = better).
template <class ScoreFn>
PermutationResult permutation_test(const Matrix& X, const Vector& y, ScoreFn&& score_fn, std::size_t P,
                                   std::uint64_t seed) {
  PermutationResult res;
  res.observed = score_fn(X, y);
  res.null.assign(P, 0.0);
  parallel_for(P, [&](std::size_t p) {
    Rng rng(derive_seed(seed, 0x9e27, p));
    std::vector<double> labels(y.data(), y.data() + y.size());
    rng.shuffle(labels);
    res.null[p] = score_fn(X, Eigen::Map<const Vector>(labels.data(), y.size()));
  });
  res.p_value = permutation_p_value(res.observed, res.null);
  return res;
}

}  // namespace flicker::sparse

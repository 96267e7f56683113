#include <gtest/gtest.h>

#include <cmath>

#include "flicker/inference.hpp"
#include "flicker/random.hpp"

using namespace flicker;
using namespace flicker::inference;

namespace {

Vector randn(Eigen::Index n, Rng& rng) { return Vector::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); }); }

}  // namespace

TEST(Glm, NoiselessLine) {
  Matrix X(5, 1);
  X << -2, -1, 0, 1, 2;
  const auto r = glm_fit(X, 2.0 * X.col(0), {"x"});
  EXPECT_NEAR(r["x"].beta, 2.0, 1e-12);
  EXPECT_NEAR(r["(Intercept)"].beta, 0.0, 1e-12);
  EXPECT_NEAR(r.r2, 1.0, 1e-12);
  EXPECT_EQ(r.residual_df, 3.0);
}

TEST(Glm, ClosedFormTwoVariableRegression) {
  // y = b0 + b1 x + e: b1 = Sxy / Sxx, se(b1) = sqrt(s^2 / Sxx)
  const std::vector<double> xs{1, 2, 3, 4, 5, 6}, ys{2.1, 3.9, 6.2, 7.8, 10.1, 12.2};
  double mx = 0, my = 0;
  for (int i = 0; i < 6; ++i) mx += xs[i] / 6, my += ys[i] / 6;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < 6; ++i) sxx += (xs[i] - mx) * (xs[i] - mx), sxy += (xs[i] - mx) * (ys[i] - my);
  const double b1 = sxy / sxx, b0 = my - b1 * mx;
  double sse = 0;
  for (int i = 0; i < 6; ++i) sse += std::pow(ys[i] - b0 - b1 * xs[i], 2);
  const double s2 = sse / 4, se1 = std::sqrt(s2 / sxx), se0 = std::sqrt(s2 * (1.0 / 6 + mx * mx / sxx));

  Matrix X(6, 1);
  Vector y(6);
  for (int i = 0; i < 6; ++i) X(i, 0) = xs[i], y(i) = ys[i];
  const auto r = glm_fit(X, y);
  EXPECT_NEAR(r["x1"].beta, b1, 1e-12);
  EXPECT_NEAR(r["x1"].se, se1, 1e-12);
  EXPECT_NEAR(r["(Intercept)"].beta, b0, 1e-12);
  EXPECT_NEAR(r["(Intercept)"].se, se0, 1e-12);
  EXPECT_NEAR(r["x1"].t, b1 / se1, 1e-9);
  EXPECT_LT(r["x1"].p, 1e-5);
}

TEST(Glm, RankDeficiencyNamesColumn) {
  Rng rng(1);
  Matrix X(20, 3);
  X.col(0) = randn(20, rng);
  X.col(1) = randn(20, rng);
  X.col(2) = X.col(0) * 2.0 - X.col(1);
  try {
    glm_fit(X, randn(20, rng), {"visual", "haptic", "combo"});
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank deficient"), std::string::npos);
    EXPECT_TRUE(msg.find("visual") != std::string::npos || msg.find("haptic") != std::string::npos ||
                msg.find("combo") != std::string::npos);
  }
}

TEST(Glm, InputErrors) {
  EXPECT_THROW(glm_fit(Matrix::Ones(3, 2), Vector::Ones(3)), Error);
  EXPECT_THROW(glm_fit(Matrix::Ones(5, 1), Vector::Ones(4)), Error);
  Matrix X = Matrix::Random(6, 1);
  X(0, 0) = NAN;
  EXPECT_THROW(glm_fit(X, Vector::Ones(6)), Error);
}

TEST(Glm, NullPValuesRoughlyUniform) {
  const int reps = 1000;
  int below05 = 0, below50 = 0;
  for (int r = 0; r < reps; ++r) {
    Rng rng(derive_seed(3, r));
    Matrix X(40, 2);
    X.col(0) = randn(40, rng);
    X.col(1) = randn(40, rng);
    const double p = glm_fit(X, randn(40, rng))["x1"].p;
    below05 += p < 0.05;
    below50 += p < 0.5;
  }
  EXPECT_NEAR(below05 / double(reps), 0.05, 0.02);
  EXPECT_NEAR(below50 / double(reps), 0.5, 0.05);
}

TEST(Mediation, PlantedProductOfCoefficients) {
  // m = 0.5 x + e with e orthogonal to [1, x], y = x + 2 m: both path models
  // fit exactly, so gamma1 = 0.5, beta1 = 1, beta2 = 2
  Rng rng(4);
  const Vector x = randn(100, rng);
  Vector e = randn(100, rng);
  Matrix D(100, 2);
  D.col(0).setOnes();
  D.col(1) = x;
  e -= D * D.householderQr().solve(e);
  const Vector m = 0.5 * x + e;
  const Vector y = x + 2.0 * m;
  MediationOptions o;
  o.n_sims = 200;
  o.seed = 1;
  const auto r = mediate(x, m, y, o);
  EXPECT_NEAR(r.acme.estimate, 1.0, 1e-9);
  EXPECT_NEAR(r.ade.estimate, 1.0, 1e-9);
  EXPECT_NEAR(r.total.estimate, 2.0, 1e-9);
  EXPECT_NEAR(r.proportion.estimate, 0.5, 1e-9);
  EXPECT_EQ(r.n_sims, 200u);
}

TEST(Mediation, TotalIsAdePlusAcmeEverywhere) {
  Rng rng(5);
  const Vector x = randn(80, rng);
  const Vector m = 0.3 * x + randn(80, rng);
  const Vector y = 0.4 * x - 0.6 * m + randn(80, rng);
  MediationOptions o;
  o.n_sims = 500;
  o.seed = 2;
  const auto r = mediate(x, m, y, o);
  EXPECT_NEAR(r.total.estimate, r.ade.estimate + r.acme.estimate, 1e-10);
  for (const auto& d : r.draws) EXPECT_NEAR(d.total, d.ade + d.acme, 1e-10);
  // total equals the simple regression slope of y on x
  Matrix X(80, 1);
  X.col(0) = x;
  EXPECT_NEAR(r.total.estimate, glm_fit(X, y)["x1"].beta, 1e-10);
}

TEST(Mediation, BrokenPathCoversZero) {
  Rng rng(6);
  const Vector x = randn(150, rng);
  const Vector m = randn(150, rng);
  const Vector y = x + m + randn(150, rng);
  MediationOptions o;
  o.n_sims = 1000;
  o.seed = 3;
  const auto r = mediate(x, m, y, o);
  EXPECT_LT(std::fabs(r.acme.estimate), 0.2);
  EXPECT_LE(r.acme.ci_low, 0.0);
  EXPECT_GE(r.acme.ci_high, 0.0);
  EXPECT_GT(r.acme.p, 0.05);
  EXPECT_LT(r.ade.p, 0.01);
}

TEST(Mediation, CisContainPointEstimate) {
  int contained = 0;
  const int runs = 40;
  for (int k = 0; k < runs; ++k) {
    Rng rng(derive_seed(9, k));
    const Vector x = randn(100, rng);
    const Vector m = 0.5 * x + randn(100, rng);
    const Vector y = 0.3 * x + 0.4 * m + randn(100, rng);
    MediationOptions o;
    o.n_sims = 300;
    o.seed = k;
    const auto r = mediate(x, m, y, o);
    contained += r.acme.ci_low <= r.acme.estimate && r.acme.estimate <= r.acme.ci_high &&
                 r.ade.ci_low <= r.ade.estimate && r.ade.estimate <= r.ade.ci_high;
  }
  EXPECT_GE(contained, runs * 99 / 100);
}

TEST(Mediation, DeterministicAndCovariates) {
  Rng rng(7);
  const Vector x = randn(60, rng), m = 0.5 * x + randn(60, rng), y = x + m + randn(60, rng);
  MediationOptions o;
  o.n_sims = 100;
  o.seed = 5;
  const auto a = mediate(x, m, y, o), b = mediate(x, m, y, o);
  EXPECT_EQ(a.acme.ci_low, b.acme.ci_low);
  EXPECT_EQ(a.ade.p, b.ade.p);
  o.covariates = Matrix(60, 1);
  o.covariates.col(0) = randn(60, rng);
  const auto c = mediate(x, m, y, o);
  EXPECT_NEAR(c.total.estimate, c.ade.estimate + c.acme.estimate, 1e-10);
}

TEST(Mediation, BootstrapPSmoothing) {
  EXPECT_DOUBLE_EQ(inference::detail::bootstrap_p(std::vector<double>(99, 1.0)), 2.0 / 100.0);
  EXPECT_DOUBLE_EQ(inference::detail::bootstrap_p({-1.0, 1.0}), 1.0);
}

TEST(Mediation, InputErrors) {
  EXPECT_THROW(mediate(Vector::Ones(10), Vector::LinSpaced(10, 0, 1), Vector::Ones(10)), Error);
  EXPECT_THROW(mediate(Vector::LinSpaced(10, 0, 1), Vector::LinSpaced(9, 0, 1), Vector::Ones(10)), Error);
}

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include <Eigen/QR>

#include "flicker/random.hpp"
#include "flicker/rsa.hpp"

using namespace flicker;
using namespace flicker::rsa;

namespace {

struct Synthetic {
  EmbeddingMatrix m;
  std::unordered_map<std::string, int> viv;
};

// v * u + noise per participant, for a fixed unit direction u
Synthetic planted(std::size_t per_bin, int dim, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Vector u(dim);
  for (int d = 0; d < dim; ++d) u(d) = rng.normal();
  u.normalize();
  Matrix X(kBins * per_bin, dim);
  std::vector<std::string> ids;
  Synthetic s;
  for (int b = 0; b < kBins; ++b)
    for (std::size_t k = 0; k < per_bin; ++k) {
      const auto r = static_cast<Eigen::Index>(b * per_bin + k);
      for (int d = 0; d < dim; ++d) X(r, d) = b * u(d) + noise * rng.normal();
      ids.push_back("p" + std::to_string(r));
      s.viv[ids.back()] = b;
    }
  s.m = EmbeddingMatrix::from_matrix(X, ids, "synthetic");
  return s;
}

Matrix random_orthogonal(int dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix A(dim, dim);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
  return Eigen::HouseholderQR<Matrix>(A).householderQ();
}

}  // namespace

TEST(BinMeans, SingleMemberAndCancellation) {
  Matrix X = Matrix::Zero(12, 2);
  std::unordered_map<std::string, int> viv;
  std::vector<std::string> ids;
  for (int b = 0; b < kBins; ++b) {
    X(b, 0) = b;
    X(b, 1) = 1;
    ids.push_back("id" + std::to_string(b));
    viv[ids.back()] = b;
  }
  // bin 10 gets a second member opposite to the first
  X(10, 0) = 1;
  X(10, 1) = 0;
  X(11, 0) = -1;
  X(11, 1) = 0;
  ids.push_back("id11");
  viv["id11"] = 10;
  const Matrix m = bin_mean_embeddings(EmbeddingMatrix::from_matrix(X, ids, "t"), viv);
  EXPECT_EQ(m(3, 0), 3.0);
  EXPECT_EQ(m(3, 1), 1.0);
  EXPECT_EQ(m.row(10).norm(), 0.0);
}

TEST(BinMeans, RowOrderDoesNotMatterBitForBit) {
  const auto s = planted(7, 5, 0.3, 1);
  EmbeddingMatrix rev = s.m;
  std::reverse(rev.ids.begin(), rev.ids.end());
  for (std::size_t i = 0; i < s.m.rows(); ++i)
    std::copy(s.m.row(i).begin(), s.m.row(i).end(), rev.row(s.m.rows() - 1 - i).begin());
  const Matrix a = bin_mean_embeddings(s.m, s.viv), b = bin_mean_embeddings(rev, s.viv);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}

TEST(BinMeans, Errors) {
  auto s = planted(1, 2, 0.0, 2);
  s.viv.erase("p0");
  EXPECT_THROW(bin_mean_embeddings(s.m, s.viv), Error);
  s.viv["p0"] = 1;  // bin 0 now empty
  EXPECT_THROW(bin_mean_embeddings(s.m, s.viv), Error);
}

TEST(Rdm, EuclideanBasics) {
  Matrix bins = Matrix::Zero(kBins, 3);
  bins(0, 0) = 1;
  bins(1, 1) = 1;
  bins.row(2) = bins.row(3);
  const auto r = rdm_euclidean(bins);
  EXPECT_DOUBLE_EQ(r(0, 1), std::sqrt(2.0));
  EXPECT_EQ(r(2, 3), 0.0);
  EXPECT_THROW(rdm_euclidean(Matrix::Zero(10, 3)), Error);
}

TEST(Rdm, SymmetryAndTriangleOnAllTriples) {
  Rng rng(3);
  Matrix bins(kBins, 6);
  for (Eigen::Index i = 0; i < bins.size(); ++i) bins.data()[i] = rng.normal();
  const auto r = rdm_euclidean(bins);
  for (int i = 0; i < kBins; ++i)
    for (int j = 0; j < kBins; ++j) {
      EXPECT_EQ(r(i, j), r(j, i));
      for (int k = 0; k < kBins; ++k) EXPECT_LE(r(i, k), r(i, j) + r(j, k) + 1e-12);
    }
}

TEST(Rdm, Theoretical) {
  const auto t = theoretical_rdm();
  EXPECT_EQ(t(0, 10), 10.0);
  EXPECT_EQ(t(2, 8), 6.0);
  for (int k = 0; k < kBins; ++k) EXPECT_EQ(t(k, k), 0.0);
  EXPECT_NO_THROW(t.check());
  EXPECT_EQ(t.upper_triangle().size(), 55u);
  EXPECT_EQ(t.all_entries().size(), 121u);
}

TEST(Spearman, RankFormulaOracle) {
  const std::vector<double> x{1, 2, 3}, y{3, 1, 2};
  double d2 = 0;  // ranks equal values here
  for (int i = 0; i < 3; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  const double oracle = 1.0 - 6.0 * d2 / (3.0 * (9.0 - 1.0));
  EXPECT_NEAR(oracle, -0.5, 1e-15);
  const auto c = spearman(x, y);
  EXPECT_NEAR(c.rho, oracle, 1e-12);
  // all six orderings of 3 ranks have |rho| >= 0.5
  EXPECT_NEAR(c.p_exact, 1.0, 1e-12);
  // only identity and reversal reach |rho| = 1 among 24 orderings
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_NEAR(spearman(a, a).p_exact, 2.0 / 24.0, 1e-12);
}

TEST(Spearman, MonotoneAndReversed) {
  std::vector<double> x, y, z;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i);
    y.push_back(std::exp(0.3 * i));
    z.push_back(-i * i);
  }
  EXPECT_NEAR(spearman(x, y).rho, 1.0, 1e-12);
  EXPECT_NEAR(spearman(x, z).rho, -1.0, 1e-12);
  EXPECT_LT(spearman(x, y).p_t, 1e-10);
  EXPECT_TRUE(std::isnan(spearman(x, y).p_exact));
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
}

TEST(Alignment, SelfIsOne) {
  EXPECT_NEAR(rdm_alignment(theoretical_rdm(), theoretical_rdm()).rho, 1.0, 1e-12);
  EXPECT_NEAR(rdm_alignment(theoretical_rdm(), theoretical_rdm(), true).rho, 1.0, 1e-12);
}

TEST(Alignment, NullRhoCentresOnZero) {
  Rng rng(4);
  double sum = 0;
  const int reps = 300;
  for (int r = 0; r < reps; ++r) {
    Rdm m;
    for (int i = 0; i < kBins; ++i)
      for (int j = i + 1; j < kBins; ++j) m.values(i, j) = m.values(j, i) = rng.uniform();
    sum += rdm_alignment(m, theoretical_rdm()).rho;
  }
  EXPECT_LT(std::fabs(sum / reps), 0.05);
}

TEST(Alignment, PlantedRecovery) {
  const auto clean = planted(5, 16, 0.0, 5);
  EXPECT_NEAR(rdm_alignment(rdm_euclidean(bin_mean_embeddings(clean.m, clean.viv)), theoretical_rdm()).rho, 1.0, 1e-12);
  // SNR 10: noise sd one tenth of the unit step
  const auto noisy = planted(20, 16, 0.1, 6);
  EXPECT_GT(rdm_alignment(rdm_euclidean(bin_mean_embeddings(noisy.m, noisy.viv)), theoretical_rdm()).rho, 0.95);
}

TEST(Alignment, RotationInvariant) {
  const auto s = planted(6, 8, 0.5, 7);
  const Matrix Q = random_orthogonal(8, 8);
  const auto rotated = EmbeddingMatrix::from_matrix(s.m.to_matrix() * Q, s.m.ids, "rot");
  const auto a = rdm_alignment(rdm_euclidean(bin_mean_embeddings(s.m, s.viv)), theoretical_rdm());
  const auto b = rdm_alignment(rdm_euclidean(bin_mean_embeddings(rotated, s.viv)), theoretical_rdm());
  EXPECT_NEAR(a.rho, b.rho, 1e-9);
}

TEST(Shuffle, DeterministicAndNearZero) {
  const auto s = planted(10, 8, 0.1, 9);
  const auto a = shuffle_control(s.m, s.viv, 42), b = shuffle_control(s.m, s.viv, 42);
  EXPECT_EQ(a.values, b.values);
  double sum = 0;
  for (std::uint64_t k = 0; k < 200; ++k) sum += rdm_alignment(shuffle_control(s.m, s.viv, derive_seed(1, k)), theoretical_rdm()).rho;
  EXPECT_LT(std::fabs(sum / 200), 0.1);
}

TEST(Shuffle, IdentityLikeShuffleMatchesOriginal) {
  // every row identical, so any relabelling acts like the identity
  Matrix X(22, 2);
  std::vector<std::string> ids;
  std::unordered_map<std::string, int> viv;
  for (int r = 0; r < 22; ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = 2.0;
    ids.push_back("q" + std::to_string(r));
    viv[ids.back()] = r % kBins;
  }
  const auto m = EmbeddingMatrix::from_matrix(X, ids, "flat");
  EXPECT_EQ(shuffle_control(m, viv, 3).values, rdm_euclidean(bin_mean_embeddings(m, viv)).values);
}

TEST(Alignment, NearTiesMergedBelowFloatPrecision) {
  const auto v = merge_near_ties({1.0, 2.0 + 1e-7, 2.0, 3.0, 1.0 - 2e-7});
  EXPECT_EQ(v[0], v[4]);
  EXPECT_EQ(v[1], v[2]);
  EXPECT_LT(v[0], v[1]);
  EXPECT_EQ(v[3], 3.0);
}

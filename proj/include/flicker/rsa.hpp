#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flicker/embedding_io.hpp"
#include "flicker/error.hpp"
#include "flicker/random.hpp"
#include "flicker/stats.hpp"

namespace flicker::rsa {

inline constexpr int kBins = 11;  // vividness 0..10

/// Symmetric, zero-diagonal, non-negative 11x11 dissimilarity matrix.
struct Rdm {
  Matrix values = Matrix::Zero(kBins, kBins);

  double operator()(int i, int j) const { return values(i, j); }

  void check() const {
    for (int i = 0; i < kBins; ++i) {
      if (values(i, i) != 0.0) throw internal_error("RDM diagonal must be zero");
      for (int j = 0; j < kBins; ++j) {
        if (values(i, j) != values(j, i)) throw internal_error("RDM must be symmetric");
        if (!(values(i, j) >= 0.0)) throw internal_error("RDM entries must be non-negative");
      }
    }
  }

  /// Strict upper triangle, row-major (55 entries).
  std::vector<double> upper_triangle() const {
    std::vector<double> out;
    out.reserve(kBins * (kBins - 1) / 2);
    for (int i = 0; i < kBins; ++i)
      for (int j = i + 1; j < kBins; ++j) out.push_back(values(i, j));
    return out;
  }

  /// All 121 entries, row-major, diagonal and symmetric copies included.
  std::vector<double> all_entries() const {
    std::vector<double> out;
    for (int i = 0; i < kBins; ++i)
      for (int j = 0; j < kBins; ++j) out.push_back(values(i, j));
    return out;
  }
};

/// Row b = mean of the vectors whose id has vividness b. Members are summed in
/// id order in float64, so the result does not depend on row order.
inline Matrix bin_mean_embeddings(const EmbeddingMatrix& m, const std::unordered_map<std::string, int>& vividness) {
  std::vector<std::vector<std::size_t>> members(kBins);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto it = vividness.find(m.ids[i]);
    if (it == vividness.end()) throw input_error("no vividness for embedding id '" + m.ids[i] + "'");
    if (it->second < 0 || it->second >= kBins) throw input_error("vividness out of range for id '" + m.ids[i] + "'");
    members[it->second].push_back(i);
  }
  Matrix out = Matrix::Zero(kBins, m.dim);
  for (int b = 0; b < kBins; ++b) {
    auto& mem = members[b];
    if (mem.empty()) throw input_error("vividness bin " + std::to_string(b) + " is empty");
    std::sort(mem.begin(), mem.end(), [&](auto x, auto y) { return m.ids[x] < m.ids[y]; });
    for (auto i : mem) {
      const auto r = m.row(i);
      for (std::uint32_t d = 0; d < m.dim; ++d) out(b, d) += static_cast<double>(r[d]);
    }
    out.row(b) /= static_cast<double>(mem.size());
  }
  return out;
}

inline Rdm rdm_euclidean(const Matrix& bins) {
  if (bins.rows() != kBins) throw input_error("RDM needs exactly 11 bin rows");
  Rdm r;
  for (int i = 0; i < kBins; ++i)
    for (int j = i + 1; j < kBins; ++j) r.values(i, j) = r.values(j, i) = (bins.row(i) - bins.row(j)).norm();
  r.check();
  return r;
}

/// |i - j|
inline Rdm theoretical_rdm() {
  Rdm r;
  for (int i = 0; i < kBins; ++i)
    for (int j = 0; j < kBins; ++j) r.values(i, j) = std::abs(i - j);
  return r;
}

struct Correlation {
  double rho = 0.0;
  double p_t = 1.0;                                            // t approximation, two-sided
  double p_exact = std::numeric_limits<double>::quiet_NaN();   // permutation, n <= 8 only
};

inline constexpr std::size_t kExactPermutationLimit = 8;

/// Spearman rank correlation with average ranks for ties.
inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw input_error("spearman: length mismatch");
  if (x.size() < 3) throw input_error("spearman: need at least 3 pairs");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  Correlation c;
  c.rho = pearson(rx, ry);
  const double n = static_cast<double>(x.size());
  const double denom = 1.0 - c.rho * c.rho;
  c.p_t = denom <= 0.0 ? 0.0 : t_two_sided_p(c.rho * std::sqrt((n - 2.0) / denom), n - 2.0);
  if (x.size() <= kExactPermutationLimit) {
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> permuted(x.size());
    std::size_t total = 0, extreme = 0;
    do {
      for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = ry[perm[i]];
      ++total;
      if (std::fabs(pearson(rx, permuted)) >= std::fabs(c.rho) - 1e-12) ++extreme;
    } while (std::next_permutation(perm.begin(), perm.end()));
    c.p_exact = static_cast<double>(extreme) / static_cast<double>(total);
  }
  return c;
}

// Embeddings are float32; distances closer than this (relative to the largest
// entry) are below input precision and ranked as ties.
inline constexpr double kRdmTieTolerance = 1e-5;

/// Collapses runs of sorted values whose neighbours differ by at most
/// tol * max|v| onto the run's first value.
inline std::vector<double> merge_near_ties(std::vector<double> v, double tol = kRdmTieTolerance) {
  if (v.empty()) return v;
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::fabs(x));
  const double eps = tol * scale;
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  double anchor = v[order[0]], prev = anchor;
  for (std::size_t k : order) {
    if (v[k] - prev > eps) anchor = v[k];
    prev = v[k];
    v[k] = anchor;
  }
  return v;
}

/// Spearman between the strict upper triangles of two RDMs, or between the
/// full matrices when `full_matrix` is set.
inline Correlation rdm_alignment(const Rdm& model, const Rdm& theory, bool full_matrix = false) {
  const auto a = merge_near_ties(full_matrix ? model.all_entries() : model.upper_triangle());
  const auto b = merge_near_ties(full_matrix ? theory.all_entries() : theory.upper_triangle());
  return spearman(a, b);
}

/// Vividness labels permuted across ids (bin sizes preserved), then the RDM.
inline Rdm shuffle_control(const EmbeddingMatrix& m, const std::unordered_map<std::string, int>& vividness,
                           std::uint64_t seed) {
  std::vector<std::string> ids = m.ids;
  std::sort(ids.begin(), ids.end());
  std::vector<int> labels;
  labels.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = vividness.find(id);
    if (it == vividness.end()) throw input_error("no vividness for embedding id '" + id + "'");
    labels.push_back(it->second);
  }
  Rng(seed).shuffle(labels);
  std::unordered_map<std::string, int> shuffled;
  for (std::size_t i = 0; i < ids.size(); ++i) shuffled.emplace(ids[i], labels[i]);
  return rdm_euclidean(bin_mean_embeddings(m, shuffled));
}

}  // namespace flicker::rsa

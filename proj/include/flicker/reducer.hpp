#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flicker/embedding_io.hpp"
#include "flicker/error.hpp"
#include "flicker/parallel.hpp"
#include "flicker/random.hpp"
#include "flicker/stats.hpp"

namespace flicker::reducer {

struct ReducerParams {
  int n_components = 10;
  int n_neighbors = 15;
  double min_dist = 0.1;
  double spread = 1.0;
  int n_epochs = 500;
  int negative_sample_rate = 5;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_neighbors < 2) throw input_error("reducer: n_neighbors must be >= 2");
    if (!(min_dist > 0.0) || min_dist > spread) throw input_error("reducer: require 0 < min_dist <= spread");
    if (n_components < 1) throw input_error("reducer: n_components must be >= 1");
    if (n_epochs < 1) throw input_error("reducer: n_epochs must be >= 1");
    if (negative_sample_rate < 0) throw input_error("reducer: negative_sample_rate must be >= 0");
  }
};

struct Neighbors {
  std::vector<std::vector<std::size_t>> index;  // per point, k nearest (self excluded)
  std::vector<std::vector<double>> distance;    // ascending
};

/// Brute-force Euclidean k nearest neighbours; ties broken by index.
inline Neighbors exact_knn(const Matrix& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k >= n) throw input_error("k-NN: k (" + std::to_string(k) + ") must be smaller than the point count (" +
                                std::to_string(n) + ")");
  Neighbors nb;
  nb.index.resize(n);
  nb.distance.resize(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back((points.row(i) - points.row(j)).norm(), j);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    nb.index[i].resize(k);
    nb.distance[i].resize(k);
    for (std::size_t t = 0; t < k; ++t) {
      nb.distance[i][t] = cand[t].first;
      nb.index[i][t] = cand[t].second;
    }
  });
  return nb;
}

struct FuzzyEdge {
  std::size_t i;
  std::size_t j;  // i < j
  double weight;  // in (0, 1]
};

/// Symmetrized fuzzy neighbourhood graph plus the per-point calibration.
struct FuzzyGraph {
  std::size_t n = 0;
  std::vector<FuzzyEdge> edges;  // sorted by (i, j), unique, i < j
  std::vector<double> rho;
  std::vector<double> sigma;

  double weight(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, b},
                               [](const FuzzyEdge& e, const std::pair<std::size_t, std::size_t>& key) {
                                 return std::pair{e.i, e.j} < key;
                               });
    return (it != edges.end() && it->i == a && it->j == b) ? it->weight : 0.0;
  }
};

inline constexpr double kSigmaLow = 1e-8;
inline constexpr double kSigmaHigh = 1e3;
inline constexpr int kBisectionSteps = 64;

/// Membership mass of one point's neighbours at bandwidth sigma.
inline double membership_sum(const std::vector<double>& dists, double rho, double sigma) {
  double s = 0.0;
  for (double d : dists) s += std::exp(-std::max(0.0, d - rho) / sigma);
  return s;
}

/// Bandwidth solving membership_sum = log2(k) by bisection on [1e-8, 1e3].
inline double solve_sigma(const std::vector<double>& dists, double rho) {
  const double target = std::log2(static_cast<double>(dists.size()));
  double lo = kSigmaLow, hi = kSigmaHigh, mid = 0.5 * (lo + hi);
  for (int it = 0; it < kBisectionSteps; ++it) {
    mid = 0.5 * (lo + hi);
    if (membership_sum(dists, rho, mid) > target) hi = mid;
    else lo = mid;
  }
  return mid;
}

/// Fuzzy union a + b - ab.
inline double fuzzy_union(double a, double b) { return a + b - a * b; }

inline FuzzyGraph fuzzy_knn_graph(const Matrix& points, std::size_t k) {
  const auto nb = exact_knn(points, k);
  FuzzyGraph g;
  g.n = static_cast<std::size_t>(points.rows());
  g.rho.resize(g.n);
  g.sigma.resize(g.n);
  parallel_for(g.n, [&](std::size_t i) {
    g.rho[i] = nb.distance[i].front();
    g.sigma[i] = solve_sigma(nb.distance[i], g.rho[i]);
  });

  // Directed memberships keyed by (min, max) so both directions meet.
  struct Directed {
    std::size_t lo, hi;
    bool forward;  // lo -> hi
    double w;
  };
  std::vector<Directed> dir;
  dir.reserve(g.n * k);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = nb.index[i][t];
      const double w = std::exp(-std::max(0.0, nb.distance[i][t] - g.rho[i]) / g.sigma[i]);
      dir.push_back({std::min(i, j), std::max(i, j), i < j, w});
    }
  }
  std::sort(dir.begin(), dir.end(), [](const Directed& a, const Directed& b) {
    return std::tie(a.lo, a.hi, a.forward) < std::tie(b.lo, b.hi, b.forward);
  });
  for (std::size_t s = 0; s < dir.size();) {
    double fwd = 0.0, bwd = 0.0;
    std::size_t e = s;
    while (e < dir.size() && dir[e].lo == dir[s].lo && dir[e].hi == dir[s].hi) {
      (dir[e].forward ? fwd : bwd) = dir[e].w;
      ++e;
    }
    const double w = fuzzy_union(fwd, bwd);
    if (w > 0.0) g.edges.push_back({dir[s].lo, dir[s].hi, std::min(w, 1.0)});
    s = e;
  }
  return g;
}

inline FuzzyGraph fuzzy_knn_graph(const EmbeddingMatrix& m, std::size_t k) {
  return fuzzy_knn_graph(m.to_matrix(), k);
}

// ---------------------------------------------------------------------------
// Output-space curve 1 / (1 + a d^(2b))

struct CurveParams {
  double a;
  double b;
};

inline constexpr int kCurveSamples = 300;

/// Target membership curve: 1 inside min_dist, exponential decay after.
inline double target_curve(double d, double min_dist, double spread) {
  return d <= min_dist ? 1.0 : std::exp(-(d - min_dist) / spread);
}

/// Levenberg-Marquardt least squares of 1/(1 + a d^(2b)) against the target
/// curve on 300 points spanning [0, 3 * spread].
inline CurveParams fit_ab(double min_dist, double spread) {
  if (!(min_dist > 0.0) || min_dist > spread) throw input_error("fit_ab: require 0 < min_dist <= spread");
  std::vector<double> xs(kCurveSamples), ys(kCurveSamples);
  for (int i = 0; i < kCurveSamples; ++i) {
    xs[i] = 3.0 * spread * i / (kCurveSamples - 1);
    ys[i] = target_curve(xs[i], min_dist, spread);
  }
  auto sse = [&](double a, double b) {
    double s = 0.0;
    for (int i = 0; i < kCurveSamples; ++i) {
      const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b)) - ys[i];
      s += r * r;
    }
    return s;
  };

  double a = 1.0, b = 1.0, lambda = 1e-3;
  double cost = sse(a, b);
  for (int iter = 0; iter < 1000; ++iter) {
    Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
    for (int i = 0; i < kCurveSamples; ++i) {
      const double x = xs[i];
      const double u = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
      const double den = 1.0 + a * u;
      const double r = 1.0 / den - ys[i];
      Eigen::Vector2d J;
      J(0) = -u / (den * den);
      J(1) = x > 0.0 ? -a * u * 2.0 * std::log(x) / (den * den) : 0.0;
      JtJ += J * J.transpose();
      Jtr += J * r;
    }
    for (;;) {
      Eigen::Matrix2d A = JtJ;
      A.diagonal() *= (1.0 + lambda);
      const Eigen::Vector2d step = -A.ldlt().solve(Jtr);
      const double na = a + step(0), nb = b + step(1);
      const double ncost = (na > 0.0 && nb > 0.0) ? sse(na, nb) : INFINITY;
      if (ncost <= cost) {
        a = na;
        b = nb;
        cost = ncost;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (std::fabs(step(0)) < 1e-6 * (1.0 + a) && std::fabs(step(1)) < 1e-6 * (1.0 + b)) return {a, b};
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) {
        // No descent direction left: at a stationary point.
        if (std::isfinite(a) && std::isfinite(b)) return {a, b};
        throw internal_error("fit_ab: Levenberg-Marquardt stalled");
      }
    }
  }
  throw internal_error("fit_ab: no convergence after 1000 iterations");
}

// ---------------------------------------------------------------------------
// Initialization

/// Eigenvectors 2..dim+1 of the symmetric normalized Laplacian, or nullopt if
/// the eigensolver fails. Signs are fixed so each vector's largest-magnitude
/// entry is positive.
inline std::optional<Matrix> spectral_layout(const FuzzyGraph& g, int dim) {
  const auto n = static_cast<Eigen::Index>(g.n);
  if (n <= dim + 1) return std::nullopt;
  Vector deg = Vector::Zero(n);
  for (const auto& e : g.edges) {
    deg(e.i) += e.weight;
    deg(e.j) += e.weight;
  }
  Vector dinv(n);
  for (Eigen::Index i = 0; i < n; ++i) dinv(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;

  Matrix vecs;
  constexpr Eigen::Index kDenseLimit = 2500;
  if (n <= kDenseLimit) {
    Matrix L = Matrix::Identity(n, n);
    for (const auto& e : g.edges) {
      const double v = e.weight * dinv(e.i) * dinv(e.j);
      L(e.i, e.j) -= v;
      L(e.j, e.i) -= v;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(L);
    if (es.info() != Eigen::Success) return std::nullopt;
    vecs = es.eigenvectors().middleCols(1, dim);
  } else {
    // Block subspace iteration on (I + D^-1/2 W D^-1/2) / 2, whose top
    // eigenvectors are the Laplacian's bottom ones.
    const Eigen::Index block = dim + 1 + 8;
    auto apply = [&](const Matrix& X) {
      Matrix Y = 0.5 * X;
      for (const auto& e : g.edges) {
        const double v = 0.5 * e.weight * dinv(e.i) * dinv(e.j);
        Y.row(e.i) += v * X.row(e.j);
        Y.row(e.j) += v * X.row(e.i);
      }
      return Y;
    };
    Rng rng(0x5eed5eedULL);
    Matrix X(n, block);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(X);
    X = qr.householderQ() * Matrix::Identity(n, block);
    bool converged = false;
    for (int it = 0; it < 3000 && !converged; ++it) {
      Matrix Y = apply(X);
      Eigen::HouseholderQR<Matrix> q(Y);
      X = q.householderQ() * Matrix::Identity(n, block);
      if (it % 10 == 9) {
        Matrix AX = apply(X);
        Matrix H = X.transpose() * AX;
        Eigen::SelfAdjointEigenSolver<Matrix> small(H);
        Matrix V = X * small.eigenvectors();
        Matrix R = apply(V) - V * small.eigenvalues().asDiagonal();
        converged = true;
        for (Eigen::Index c = block - 1; c >= block - 1 - dim; --c)
          if (R.col(c).norm() > 1e-6) converged = false;
        if (converged) {
          vecs.resize(n, dim);
          for (int c = 0; c < dim; ++c) vecs.col(c) = V.col(block - 2 - c);
        }
      }
    }
    if (!converged) return std::nullopt;
  }
  for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
    Eigen::Index arg = 0;
    vecs.col(c).cwiseAbs().maxCoeff(&arg);
    if (vecs(arg, c) < 0) vecs.col(c) *= -1.0;
  }
  return vecs;
}

inline Matrix random_layout(std::size_t n, int dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1a1d));
  Matrix m(n, dim);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-10.0, 10.0);
  return m;
}

/// Spectral coordinates rescaled into [-10, 10] plus a tiny seeded jitter;
/// uniform random when the spectral solve fails.
inline Matrix initial_layout(const FuzzyGraph& g, const ReducerParams& p, bool* used_spectral = nullptr) {
  auto spec = spectral_layout(g, p.n_components);
  if (used_spectral) *used_spectral = spec.has_value();
  if (!spec) return random_layout(g.n, p.n_components, p.seed);
  Matrix m = *spec;
  const double maxabs = m.cwiseAbs().maxCoeff();
  if (maxabs > 0.0) m *= 10.0 / maxabs;
  Rng rng(derive_seed(p.seed, 0x717));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 1e-4 * rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// Layout optimization

namespace detail {
inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }
}  // namespace detail

/// SGD over graph edges: attraction along sampled edges, repulsion from
/// uniformly drawn negative samples, learning rate 1 -> 0 linearly.
/// Single-threaded; output is a pure function of (graph, params).
inline Matrix optimize_layout(const FuzzyGraph& g, const ReducerParams& p, Matrix embedding) {
  p.validate();
  if (g.edges.empty()) throw input_error("optimize_layout: graph has no edges");
  const auto [a, b] = fit_ab(p.min_dist, p.spread);
  const int dim = p.n_components;

  double wmax = 0.0;
  for (const auto& e : g.edges) wmax = std::max(wmax, e.weight);
  struct Directed {
    std::size_t head, tail;
    double eps;  // epochs per sample
  };
  std::vector<Directed> work;
  for (const auto& e : g.edges) {
    if (e.weight < wmax / p.n_epochs) continue;
    const double eps = p.n_epochs / (p.n_epochs * (e.weight / wmax));
    work.push_back({e.i, e.j, eps});
    work.push_back({e.j, e.i, eps});
  }
  std::sort(work.begin(), work.end(),
            [](const Directed& x, const Directed& y) { return std::tie(x.head, x.tail) < std::tie(y.head, y.tail); });

  const std::size_t m = work.size();
  std::vector<double> next_sample(m), eps_neg(m), next_neg(m);
  for (std::size_t e = 0; e < m; ++e) {
    next_sample[e] = work[e].eps;
    eps_neg[e] = p.negative_sample_rate > 0 ? work[e].eps / p.negative_sample_rate : INFINITY;
    next_neg[e] = eps_neg[e];
  }

  Rng rng(derive_seed(p.seed, 0x59d));
  const auto n = static_cast<std::size_t>(embedding.rows());
  double alpha = 1.0;
  for (int epoch = 0; epoch < p.n_epochs; ++epoch) {
    for (std::size_t e = 0; e < m; ++e) {
      if (next_sample[e] > epoch) continue;
      const std::size_t j = work[e].head, k = work[e].tail;
      auto cur = embedding.row(j);
      auto oth = embedding.row(k);
      double d2 = (cur - oth).squaredNorm();
      double coeff = 0.0;
      if (d2 > 0.0) coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
      for (int d = 0; d < dim; ++d) {
        const double grad = detail::clip4(coeff * (cur(d) - oth(d)));
        cur(d) += grad * alpha;
        oth(d) -= grad * alpha;
      }
      next_sample[e] += work[e].eps;

      const auto n_neg = static_cast<long>((epoch - next_neg[e]) / eps_neg[e]);
      for (long s = 0; s < n_neg; ++s) {
        const std::size_t r = rng.index(n);
        auto other = embedding.row(r);
        d2 = (embedding.row(j) - other).squaredNorm();
        if (d2 > 0.0) coeff = 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
        else if (r == j) continue;
        else coeff = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double grad = coeff > 0.0 ? detail::clip4(coeff * (embedding(j, d) - other(d))) : 4.0;
          embedding(j, d) += grad * alpha;
        }
      }
      if (n_neg > 0) next_neg[e] += static_cast<double>(n_neg) * eps_neg[e];
    }
    alpha = 1.0 - static_cast<double>(epoch + 1) / p.n_epochs;
  }
  return embedding;
}

inline Matrix optimize_layout(const FuzzyGraph& g, const ReducerParams& p) {
  return optimize_layout(g, p, initial_layout(g, p));
}

/// Reduces an embedding matrix. Rows are processed in id order, so the result
/// for a given id does not depend on the input row order.
inline Matrix reduce(const EmbeddingMatrix& m, const ReducerParams& p) {
  p.validate();
  std::vector<std::size_t> order(m.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return m.ids[x] < m.ids[y]; });
  Matrix pts(m.rows(), m.dim);
  for (std::size_t r = 0; r < order.size(); ++r)
    for (std::uint32_t c = 0; c < m.dim; ++c) pts(r, c) = m.values[order[r] * m.dim + c];
  const auto g = fuzzy_knn_graph(pts, static_cast<std::size_t>(p.n_neighbors));
  const Matrix layout = optimize_layout(g, p);
  Matrix out(m.rows(), p.n_components);
  for (std::size_t r = 0; r < order.size(); ++r) out.row(order[r]) = layout.row(r);
  return out;
}

inline EmbeddingMatrix reduce_to_embx(const EmbeddingMatrix& m, const ReducerParams& p) {
  return EmbeddingMatrix::from_matrix(reduce(m, p), m.ids, m.model_tag + "+umap", false);
}

}  // namespace flicker::reducer

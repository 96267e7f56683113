#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "flicker/error.hpp"
#include "flicker/parallel.hpp"
#include "flicker/stats.hpp"

namespace flicker::clusterer {

/// Distance from each point to its min_samples-th nearest neighbour, self excluded.
inline std::vector<double> core_distances(const Matrix& points, std::size_t min_samples) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (min_samples < 1 || min_samples >= n)
    throw input_error("core_distances: min_samples must be in [1, n)");
  std::vector<double> core(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> d;
    d.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.push_back((points.row(i) - points.row(j)).norm());
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(min_samples - 1), d.end());
    core[i] = d[min_samples - 1];
  });
  return core;
}

struct MstEdge {
  std::size_t a;  // a < b
  std::size_t b;
  double weight;

  friend bool operator<(const MstEdge& x, const MstEdge& y) {
    return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
  }
  friend bool operator==(const MstEdge&, const MstEdge&) = default;
};

inline double mutual_reachability(const Matrix& points, const std::vector<double>& core, std::size_t i,
                                  std::size_t j) {
  return std::max({core[i], core[j], (points.row(i) - points.row(j)).norm()});
}

/// Prim's algorithm over the complete mutual-reachability graph, O(n^2).
/// Edges returned sorted by (weight, smaller index, larger index).
inline std::vector<MstEdge> mutual_reachability_mst(const Matrix& points, const std::vector<double>& core) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (core.size() != n) throw input_error("mutual_reachability_mst: core distance count mismatch");
  std::vector<MstEdge> out;
  if (n < 2) return out;
  out.reserve(n - 1);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::vector<char> in_tree(n, 0);
  std::size_t current = 0;
  in_tree[0] = 1;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = mutual_reachability(points, core, current, j);
      if (d < best[j]) {
        best[j] = d;
        from[j] = current;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = 1;
    out.push_back({std::min(from[next], next), std::max(from[next], next), best[next]});
    current = next;
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// One row of the condensed tree. Children below n are points that fell out
/// of `parent` at `lambda`; children at or above n are clusters born there.
struct CondensedRow {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t size;
};

struct ClusterAssignment {
  std::vector<int> labels;             // -1 = outlier
  std::vector<double> probabilities;   // 0 for outliers
  int n_clusters = 0;
};

struct ClusterTree {
  std::size_t n_points = 0;
  std::vector<CondensedRow> rows;
  std::vector<double> stability;      // indexed by cluster label - n_points
  std::vector<std::size_t> selected;  // cluster labels kept by excess of mass
};

inline constexpr double kMinDistance = 1e-12;

inline double lambda_of(double dist) { return 1.0 / std::max(dist, kMinDistance); }

/// Single-linkage dendrogram from sorted MST edges, condensed with
/// min_cluster_size, stabilities, and excess-of-mass selection.
inline ClusterTree condense_tree(const std::vector<MstEdge>& mst, std::size_t n, std::size_t min_cluster_size,
                                 bool allow_single_cluster = false) {
  if (min_cluster_size < 2) throw input_error("min_cluster_size must be >= 2");
  if (mst.size() + 1 != n) throw input_error("MST must have n - 1 edges");
  ClusterTree tree;
  tree.n_points = n;
  if (n < 2) return tree;

  std::vector<MstEdge> edges = mst;
  std::sort(edges.begin(), edges.end());

  // Dendrogram: node n + k merges `left`/`right` at edges[k].weight.
  const std::size_t total = 2 * n - 1;
  std::vector<std::size_t> left(n - 1), right(n - 1), size(total, 1);
  std::vector<double> height(n - 1);
  std::vector<std::size_t> uf(total);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const std::size_t ra = find(edges[k].a), rb = find(edges[k].b);
    const std::size_t node = n + k;
    left[k] = ra;
    right[k] = rb;
    height[k] = edges[k].weight;
    size[node] = size[ra] + size[rb];
    uf[ra] = node;
    uf[rb] = node;
  }

  const std::size_t root = total - 1;
  std::vector<std::size_t> relabel(total, 0);
  std::vector<char> ignore(total, 0);
  relabel[root] = n;
  std::size_t next_label = n + 1;

  auto fall_out = [&](std::size_t sub, std::size_t parent_label, double lambda) {
    std::vector<std::size_t> stack{sub};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ignore[v] = 1;
      if (v < n) {
        tree.rows.push_back({parent_label, v, lambda, 1});
      } else {
        stack.push_back(right[v - n]);
        stack.push_back(left[v - n]);
      }
    }
  };

  std::vector<std::size_t> queue{root};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::size_t node = queue[qi];
    if (node < n || ignore[node]) continue;
    const std::size_t l = left[node - n], r = right[node - n];
    queue.push_back(l);
    queue.push_back(r);
    const double lambda = lambda_of(height[node - n]);
    const bool big_l = size[l] >= min_cluster_size, big_r = size[r] >= min_cluster_size;
    const std::size_t label = relabel[node];
    if (big_l && big_r) {
      relabel[l] = next_label++;
      tree.rows.push_back({label, relabel[l], lambda, size[l]});
      relabel[r] = next_label++;
      tree.rows.push_back({label, relabel[r], lambda, size[r]});
    } else if (!big_l && !big_r) {
      fall_out(l, label, lambda);
      fall_out(r, label, lambda);
    } else if (!big_l) {
      relabel[r] = label;
      fall_out(l, label, lambda);
    } else {
      relabel[l] = label;
      fall_out(r, label, lambda);
    }
  }

  const std::size_t n_clusters = next_label - n;
  std::vector<double> birth(n_clusters, 0.0);
  std::vector<std::vector<std::size_t>> children(n_clusters);
  for (const auto& row : tree.rows)
    if (row.child >= n) {
      birth[row.child - n] = row.lambda;
      children[row.parent - n].push_back(row.child);
    }
  tree.stability.assign(n_clusters, 0.0);
  for (const auto& row : tree.rows)
    tree.stability[row.parent - n] += (row.lambda - birth[row.parent - n]) * static_cast<double>(row.size);

  // Excess of mass: children carry larger labels than parents, so a reverse
  // sweep sees every subtree before its root.
  std::vector<char> keep(n_clusters, 1);
  std::vector<double> subtree = tree.stability;
  if (!allow_single_cluster) keep[0] = 0;
  for (std::size_t c = n_clusters; c-- > 0;) {
    double child_sum = 0.0;
    for (auto ch : children[c]) child_sum += subtree[ch - n];
    const bool eligible = c != 0 || allow_single_cluster;
    if (eligible && (children[c].empty() || tree.stability[c] > child_sum)) {
      std::vector<std::size_t> stack(children[c]);
      while (!stack.empty()) {
        const auto d = stack.back();
        stack.pop_back();
        keep[d - n] = 0;
        for (auto g : children[d - n]) stack.push_back(g);
      }
      keep[c] = 1;
      subtree[c] = tree.stability[c];
    } else {
      keep[c] = 0;
      subtree[c] = child_sum;
    }
  }
  for (std::size_t c = 0; c < n_clusters; ++c)
    if (keep[c]) tree.selected.push_back(c + n);
  return tree;
}

/// Labels and membership strengths from a condensed tree. A point belongs to
/// the selected cluster containing the cluster it fell out of; its strength is
/// lambda_p / max lambda among that cluster's points.
inline ClusterAssignment extract_clusters(const ClusterTree& tree) {
  const std::size_t n = tree.n_points;
  ClusterAssignment out;
  out.labels.assign(n, -1);
  out.probabilities.assign(n, 0.0);
  const std::size_t n_clusters = tree.stability.size();
  std::vector<std::size_t> parent_of(n_clusters, 0);
  for (const auto& row : tree.rows)
    if (row.child >= n) parent_of[row.child - n] = row.parent;
  std::vector<int> selected_index(n_clusters, -1);
  for (std::size_t s = 0; s < tree.selected.size(); ++s) selected_index[tree.selected[s] - n] = static_cast<int>(s);
  out.n_clusters = static_cast<int>(tree.selected.size());

  std::vector<double> point_lambda(n, 0.0);
  for (const auto& row : tree.rows) {
    if (row.child >= n) continue;
    point_lambda[row.child] = row.lambda;
    std::size_t c = row.parent;
    for (;;) {
      if (selected_index[c - n] >= 0) {
        out.labels[row.child] = selected_index[c - n];
        break;
      }
      if (c == n) break;
      c = parent_of[c - n];
    }
  }
  std::vector<double> max_lambda(tree.selected.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p)
    if (out.labels[p] >= 0) max_lambda[out.labels[p]] = std::max(max_lambda[out.labels[p]], point_lambda[p]);
  for (std::size_t p = 0; p < n; ++p)
    if (out.labels[p] >= 0) out.probabilities[p] = std::min(1.0, point_lambda[p] / max_lambda[out.labels[p]]);
  return out;
}

inline ClusterAssignment condense_and_extract(const std::vector<MstEdge>& mst, std::size_t n,
                                              std::size_t min_cluster_size, bool allow_single_cluster = false) {
  return extract_clusters(condense_tree(mst, n, min_cluster_size, allow_single_cluster));
}

struct HdbscanParams {
  std::size_t min_cluster_size = 30;
  std::size_t min_samples = 0;  // 0 means min_cluster_size
  bool allow_single_cluster = false;
};

inline ClusterAssignment hdbscan(const Matrix& points, const HdbscanParams& p) {
  const std::size_t ms = p.min_samples == 0 ? p.min_cluster_size : p.min_samples;
  const auto n = static_cast<std::size_t>(points.rows());
  if (n <= ms) throw input_error("hdbscan: need more points than min_samples");
  const auto core = core_distances(points, ms);
  return condense_and_extract(mutual_reachability_mst(points, core), n, p.min_cluster_size,
                              p.allow_single_cluster);
}

// ---------------------------------------------------------------------------
// Soft topic distributions

/// Per-topic mean of member points (rows = topics).
inline Matrix topic_centroids(const Matrix& points, const std::vector<int>& labels, int n_topics) {
  Matrix c = Matrix::Zero(n_topics, points.cols());
  std::vector<double> count(n_topics, 0.0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (labels[i] < 0) continue;
    c.row(labels[i]) += points.row(i);
    count[labels[i]] += 1.0;
  }
  for (int t = 0; t < n_topics; ++t) {
    if (count[t] == 0) throw internal_error("topic " + std::to_string(t) + " has no members");
    c.row(t) /= count[t];
  }
  return c;
}

/// Softmax of -distance / temperature over topic centroids.
inline std::vector<double> soft_topic_distribution(const Eigen::Ref<const Eigen::RowVectorXd>& point,
                                                   const Matrix& centroids, double temperature = 1.0) {
  if (centroids.rows() < 1) throw input_error("soft_topic_distribution: need at least one topic");
  if (!(temperature > 0.0)) throw input_error("soft_topic_distribution: temperature must be positive");
  const auto T = static_cast<std::size_t>(centroids.rows());
  std::vector<double> logits(T);
  for (std::size_t t = 0; t < T; ++t) logits[t] = -(point - centroids.row(t)).norm() / temperature;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& l : logits) sum += (l = std::exp(l - mx));
  for (auto& l : logits) l /= sum;
  return logits;
}

inline Matrix soft_topic_matrix(const Matrix& points, const Matrix& centroids, double temperature = 1.0) {
  Matrix out(points.rows(), centroids.rows());
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    const auto p = soft_topic_distribution(points.row(static_cast<Eigen::Index>(i)), centroids, temperature);
    for (std::size_t t = 0; t < p.size(); ++t) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = p[t];
  });
  return out;
}

}  // namespace flicker::clusterer

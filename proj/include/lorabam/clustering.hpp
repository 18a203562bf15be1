#pragma once

// k-means over feature vectors: k-means++ seeding, Lloyd iterations, then a
// single-point-move refinement pass so the returned partition is a local
// optimum of the within-cluster sum of squares.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lorabam/error.hpp"
#include "lorabam/feature_store.hpp"
#include "lorabam/random.hpp"

namespace lorabam {

struct ClusterModel {
  std::size_t m = 0;
  std::vector<Vector> centroids;
  /// Cluster index per training vector, aligned with dataset order.
  std::vector<std::size_t> assignments;
  /// Sum of squared distances to the assigned centroids.
  double inertia = 0.0;
  /// Objective after seeding and after every Lloyd or refinement step.
  std::vector<double> inertia_trace;
  std::size_t iterations = 0;

  std::size_t dim() const noexcept {
    return centroids.empty() ? 0 : centroids.front().size();
  }

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(m, 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }
};

struct KMeansOptions {
  /// Cluster count; 0 selects round(sqrt(n)).
  std::size_t clusters = 0;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double rel_tol = 1e-6;
};

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

inline std::size_t default_cluster_count(std::size_t n) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n)))));
}

/// Index of the nearest centroid; the lowest index wins ties.
inline std::size_t nearest_centroid(const std::vector<Vector>& centroids,
                                    std::span<const double> x,
                                    double* best_distance = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_distance) *best_distance = best_d;
  return best;
}

inline std::size_t assign(const ClusterModel& model,
                          std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw DataError("dimension mismatch: query has " +
                    std::to_string(x.size()) + ", model has " +
                    std::to_string(model.dim()));
  }
  return nearest_centroid(model.centroids, x);
}

namespace detail {

inline std::size_t count_distinct(std::vector<Vector> points) {
  std::sort(points.begin(), points.end());
  return static_cast<std::size_t>(
      std::unique(points.begin(), points.end()) - points.begin());
}

class KMeans {
 public:
  KMeans(const std::vector<Vector>& points, std::size_t m, Rng& rng)
      : assignments_(points.size(), 0),
        points_(points),
        n_(points.size()),
        d_(points.front().size()),
        m_(m),
        rng_(rng),
        distances_(points.size(), 0.0) {}

  void seed_plus_plus() {
    centroids_.clear();
    centroids_.push_back(points_[rng_.below(n_)]);
    std::vector<double> d2(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      d2[i] = squared_distance(points_[i], centroids_[0]);
    }
    while (centroids_.size() < m_) {
      double total = 0.0;
      for (double v : d2) total += v;
      std::size_t pick = n_;
      if (total > 0.0) {
        const double r = rng_.uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          acc += d2[i];
          if (d2[i] > 0.0 && acc > r) {
            pick = i;
            break;
          }
        }
        if (pick == n_) {
          for (std::size_t i = n_; i-- > 0;) {
            if (d2[i] > 0.0) {
              pick = i;
              break;
            }
          }
        }
      }
      if (pick == n_) throw NumericError("k-means++ seeding ran out of points");
      centroids_.push_back(points_[pick]);
      for (std::size_t i = 0; i < n_; ++i) {
        d2[i] = std::min(d2[i], squared_distance(points_[i], centroids_.back()));
      }
    }
  }

  /// Nearest-centroid assignment followed by empty-cluster repair.
  void assign_all() {
    reassign();
    for (std::size_t guard = 0; guard <= m_; ++guard) {
      auto sizes = sizes_of();
      auto empty = std::find(sizes.begin(), sizes.end(), 0u);
      if (empty == sizes.end()) return;
      const auto far = static_cast<std::size_t>(
          std::max_element(distances_.begin(), distances_.end()) -
          distances_.begin());
      if (distances_[far] <= 0.0) break;
      centroids_[static_cast<std::size_t>(empty - sizes.begin())] =
          points_[far];
      reassign();
    }
    auto sizes = sizes_of();
    if (std::find(sizes.begin(), sizes.end(), 0u) != sizes.end()) {
      throw NumericError("k-means could not repair an empty cluster");
    }
  }

  void update_means() {
    std::vector<Vector> sums(m_, Vector(d_, 0.0));
    std::vector<std::size_t> counts(m_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      auto& s = sums[assignments_[i]];
      for (std::size_t j = 0; j < d_; ++j) s[j] += points_[i][j];
      ++counts[assignments_[i]];
    }
    for (std::size_t c = 0; c < m_; ++c) {
      for (std::size_t j = 0; j < d_; ++j) {
        centroids_[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
    for (std::size_t i = 0; i < n_; ++i) {
      distances_[i] = squared_distance(points_[i], centroids_[assignments_[i]]);
    }
  }

  double inertia() const {
    double s = 0.0;
    for (double v : distances_) s += v;
    return s;
  }

  /// Moves single points between clusters while doing so strictly lowers the
  /// objective (with means updated). Returns the number of moves made.
  std::size_t refine(std::vector<double>& trace, std::size_t max_passes) {
    std::size_t moves = 0;
    auto counts = sizes_of();
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
      bool moved = false;
      for (std::size_t i = 0; i < n_; ++i) {
        const std::size_t from = assignments_[i];
        if (counts[from] <= 1) continue;
        const double nf = static_cast<double>(counts[from]);
        const double cost_out =
            nf / (nf - 1.0) * squared_distance(points_[i], centroids_[from]);
        std::size_t to = from;
        double best_gain = 0.0;
        for (std::size_t c = 0; c < m_; ++c) {
          if (c == from) continue;
          const double nc = static_cast<double>(counts[c]);
          const double cost_in =
              nc / (nc + 1.0) * squared_distance(points_[i], centroids_[c]);
          const double gain = cost_out - cost_in;
          if (gain > best_gain) {
            best_gain = gain;
            to = c;
          }
        }
        const double scale = std::max(1.0, cost_out);
        if (to == from || best_gain <= 1e-12 * scale) continue;
        assignments_[i] = to;
        --counts[from];
        ++counts[to];
        recompute_mean(from);
        recompute_mean(to);
        moved = true;
        ++moves;
      }
      if (!moved) break;
      refresh_distances();
      trace.push_back(inertia());
    }
    refresh_distances();
    return moves;
  }

  std::vector<Vector> centroids_;
  std::vector<std::size_t> assignments_;

 private:
  void reassign() {
    for (std::size_t i = 0; i < n_; ++i) {
      assignments_[i] = nearest_centroid(centroids_, points_[i], &distances_[i]);
    }
  }

  void refresh_distances() {
    for (std::size_t i = 0; i < n_; ++i) {
      distances_[i] = squared_distance(points_[i], centroids_[assignments_[i]]);
    }
  }

  void recompute_mean(std::size_t c) {
    Vector sum(d_, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (assignments_[i] != c) continue;
      for (std::size_t j = 0; j < d_; ++j) sum[j] += points_[i][j];
      ++count;
    }
    for (std::size_t j = 0; j < d_; ++j) {
      centroids_[c][j] = sum[j] / static_cast<double>(count);
    }
  }

  std::vector<std::size_t> sizes_of() const {
    std::vector<std::size_t> sizes(m_, 0);
    for (auto a : assignments_) ++sizes[a];
    return sizes;
  }

  const std::vector<Vector>& points_;
  std::size_t n_, d_, m_;
  Rng& rng_;
  std::vector<double> distances_;
};

}  // namespace detail

/// Partitions `points` into non-empty clusters. Deterministic in
/// (point order, options).
inline ClusterModel kmeans_fit(const std::vector<Vector>& points,
                               const KMeansOptions& options) {
  const std::size_t n = points.size();
  if (n == 0) throw DataError("cannot cluster an empty dataset");
  const std::size_t m =
      options.clusters == 0 ? default_cluster_count(n) : options.clusters;
  if (m > n) {
    throw UsageError("cluster count " + std::to_string(m) +
                     " exceeds the number of vectors " + std::to_string(n));
  }
  if (options.max_iter == 0) throw UsageError("max_iter must be positive");
  if (!(options.rel_tol > 0.0)) throw UsageError("tolerance must be positive");
  const std::size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) throw DataError("dimension mismatch in clustering input");
  }
  if (m > 1 && detail::count_distinct(points) < m) {
    throw DataError("fewer distinct vectors than clusters (" +
                    std::to_string(m) + ")");
  }

  Rng rng(options.seed);
  detail::KMeans km(points, m, rng);
  ClusterModel model;
  model.m = m;

  km.seed_plus_plus();
  km.assign_all();
  double previous = km.inertia();
  model.inertia_trace.push_back(previous);

  std::size_t it = 0;
  while (it < options.max_iter) {
    ++it;
    const auto before = km.assignments_;
    km.update_means();
    km.assign_all();
    const double current = km.inertia();
    model.inertia_trace.push_back(current);
    const bool stable = km.assignments_ == before;
    const bool small_gain =
        previous <= 0.0 || (previous - current) < options.rel_tol * previous;
    previous = current;
    if (stable || small_gain) break;
  }
  // Alternate refinement with a nearest-centroid check until both agree, so
  // the result is a local optimum whose centroids are the cluster means.
  for (std::size_t round = 0; round < 100; ++round) {
    km.update_means();
    model.inertia_trace.push_back(km.inertia());
    const std::size_t moves = km.refine(model.inertia_trace, 10 * n + 10);
    const auto before = km.assignments_;
    km.assign_all();
    model.inertia_trace.push_back(km.inertia());
    if (moves == 0 && km.assignments_ == before) break;
  }

  model.iterations = it;
  model.centroids = std::move(km.centroids_);
  model.assignments = std::move(km.assignments_);
  model.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    model.inertia += squared_distance(points[i], model.centroids[model.assignments[i]]);
  }
  return model;
}

inline ClusterModel kmeans_fit(const Dataset& dataset,
                               const KMeansOptions& options) {
  return kmeans_fit(dataset.points(), options);
}

}  // namespace lorabam

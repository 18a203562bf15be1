#pragma once

// Score-based comparison monitors: Mahalanobis distance to a single Gaussian
// fitted on in-distribution features, and cosine similarity to the
// in-distribution mean.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "lorabam/error.hpp"
#include "lorabam/feature_store.hpp"

namespace lorabam {

inline constexpr double kDefaultEpsilonScale = 1e-6;

namespace detail {

inline void check_finite_query(std::span<const double> x, std::size_t dim) {
  if (x.size() != dim) {
    throw DataError("dimension mismatch: query has " + std::to_string(x.size()) +
                    ", monitor has " + std::to_string(dim));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("query has a non-finite coordinate");
  }
}

/// Indices of `points` in lexicographic order of the vectors.
inline std::vector<std::size_t> canonical_order(const std::vector<Vector>& points) {
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return points[a] < points[b];
  });
  return idx;
}

inline Vector mean_of(const std::vector<Vector>& points,
                      const std::vector<std::size_t>& order) {
  const std::size_t d = points.front().size();
  Vector mean(d, 0.0);
  for (auto i : order) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += points[i][j];
  }
  for (auto& v : mean) v /= static_cast<double>(points.size());
  return mean;
}

inline void check_points(const std::vector<Vector>& points) {
  const std::size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) throw DataError("dimension mismatch in fitting data");
  }
}

}  // namespace detail

class MahalanobisMonitor {
 public:
  MahalanobisMonitor() = default;

  /// Factorizes `covariance` once; throws NumericError if it is not SPD.
  MahalanobisMonitor(Vector mean, Eigen::MatrixXd covariance, double epsilon,
                     std::optional<double> threshold = std::nullopt)
      : mean_(std::move(mean)),
        covariance_(std::move(covariance)),
        epsilon_(epsilon),
        threshold_(threshold) {
    const auto d = static_cast<Eigen::Index>(mean_.size());
    if (d == 0) throw DataError("Mahalanobis monitor needs a non-empty mean");
    if (covariance_.rows() != d || covariance_.cols() != d) {
      throw DataError("covariance shape does not match the mean");
    }
    if (!covariance_.allFinite() ||
        !std::all_of(mean_.begin(), mean_.end(),
                     [](double v) { return std::isfinite(v); })) {
      throw DataError("Mahalanobis parameters must be finite");
    }
    if (!covariance_.isApprox(covariance_.transpose(), 0.0)) {
      throw NumericError("covariance is not symmetric");
    }
    if (threshold_ && !(*threshold_ >= 0.0 && std::isfinite(*threshold_))) {
      throw UsageError("Mahalanobis threshold must be finite and >= 0");
    }
    llt_.compute(covariance_);
    if (llt_.info() != Eigen::Success) {
      throw NumericError(
          "covariance is not positive definite; increase epsilon_scale");
    }
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  double epsilon() const noexcept { return epsilon_; }
  std::optional<double> threshold() const noexcept { return threshold_; }

  MahalanobisMonitor with_threshold(double threshold) const {
    if (!(threshold >= 0.0 && std::isfinite(threshold))) {
      throw UsageError("Mahalanobis threshold must be finite and >= 0");
    }
    MahalanobisMonitor copy = *this;
    copy.threshold_ = threshold;
    return copy;
  }

  /// sqrt((x - mean)^T Sigma^-1 (x - mean)) via the stored Cholesky factor.
  double score(std::span<const double> x) const {
    detail::check_finite_query(x, dim());
    Eigen::VectorXd diff(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < dim(); ++j) {
      diff[static_cast<Eigen::Index>(j)] = x[j] - mean_[j];
    }
    const Eigen::VectorXd y = llt_.matrixL().solve(diff);
    return std::sqrt(y.squaredNorm());
  }

  /// Accept iff distance <= threshold. Requires a calibrated threshold.
  bool accepts(std::span<const double> x) const {
    if (!threshold_) throw UsageError("Mahalanobis monitor is not calibrated");
    return score(x) <= *threshold_;
  }

  bool operator==(const MahalanobisMonitor& o) const {
    return mean_ == o.mean_ && covariance_ == o.covariance_ &&
           epsilon_ == o.epsilon_ && threshold_ == o.threshold_;
  }

 private:
  Vector mean_;
  Eigen::MatrixXd covariance_;
  double epsilon_ = 0.0;
  std::optional<double> threshold_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Population covariance plus eps*I, eps = epsilon_scale * trace/d (or
/// epsilon_scale itself when the trace is zero).
inline MahalanobisMonitor fit_mahalanobis(
    const std::vector<Vector>& points,
    double epsilon_scale = kDefaultEpsilonScale) {
  if (points.size() < 2) {
    throw DataError("Mahalanobis fitting needs at least 2 vectors");
  }
  if (!(epsilon_scale > 0.0) || !std::isfinite(epsilon_scale)) {
    throw UsageError("epsilon_scale must be positive");
  }
  detail::check_points(points);
  const auto order = detail::canonical_order(points);
  const Vector mean = detail::mean_of(points, order);
  const std::size_t d = mean.size();
  const auto di = static_cast<Eigen::Index>(d);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(di, di);
  Eigen::VectorXd diff(di);
  for (auto i : order) {
    for (std::size_t j = 0; j < d; ++j) {
      diff[static_cast<Eigen::Index>(j)] = points[i][j] - mean[j];
    }
    cov.selfadjointView<Eigen::Lower>().rankUpdate(diff);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(points.size());

  const double trace = cov.trace();
  const double epsilon =
      trace > 0.0 ? epsilon_scale * trace / static_cast<double>(d) : epsilon_scale;
  cov.diagonal().array() += epsilon;
  return MahalanobisMonitor(mean, std::move(cov), epsilon);
}

inline MahalanobisMonitor fit_mahalanobis(
    const Dataset& dataset, double epsilon_scale = kDefaultEpsilonScale) {
  return fit_mahalanobis(dataset.points(), epsilon_scale);
}

class CosineMonitor {
 public:
  CosineMonitor() = default;

  explicit CosineMonitor(Vector mean,
                         std::optional<double> threshold = std::nullopt)
      : mean_(std::move(mean)), threshold_(threshold) {
    if (mean_.empty()) throw DataError("cosine monitor needs a non-empty mean");
    norm2_ = 0.0;
    for (double v : mean_) {
      if (!std::isfinite(v)) throw DataError("cosine mean must be finite");
      norm2_ += v * v;
    }
    if (norm2_ == 0.0) {
      throw DataError("mean in-distribution vector is zero; cosine undefined");
    }
    if (threshold_ && !(*threshold_ >= -1.0 && *threshold_ <= 1.0)) {
      throw UsageError("cosine threshold must lie in [-1, 1]");
    }
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  std::optional<double> threshold() const noexcept { return threshold_; }

  CosineMonitor with_threshold(double threshold) const {
    return CosineMonitor(mean_, threshold);
  }

  /// <x, mean> / (|x| |mean|), clamped to [-1, 1]. A zero query scores -1 so
  /// that it is always rejected.
  double score(std::span<const double> x) const {
    detail::check_finite_query(x, dim());
    double dot = 0.0, nx2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      dot += x[j] * mean_[j];
      nx2 += x[j] * x[j];
    }
    if (nx2 == 0.0) {
      static std::atomic<bool> warned{false};
      if (!warned.exchange(true)) {
        std::cerr << "warning: zero feature vector scored as cosine -1\n";
      }
      return -1.0;
    }
    // sqrt(a*a) == a exactly, so score(mean) is exactly 1.
    return std::clamp(dot / std::sqrt(nx2 * norm2_), -1.0, 1.0);
  }

  /// Accept iff similarity >= threshold.
  bool accepts(std::span<const double> x) const {
    if (!threshold_) throw UsageError("cosine monitor is not calibrated");
    return score(x) >= *threshold_;
  }

  bool operator==(const CosineMonitor& o) const {
    return mean_ == o.mean_ && threshold_ == o.threshold_;
  }

 private:
  Vector mean_;
  double norm2_ = 0.0;
  std::optional<double> threshold_;
};

inline CosineMonitor fit_cosine(const std::vector<Vector>& points) {
  if (points.empty()) throw DataError("cosine fitting needs at least 1 vector");
  detail::check_points(points);
  const auto order = detail::canonical_order(points);
  return CosineMonitor(detail::mean_of(points, order));
}

inline CosineMonitor fit_cosine(const Dataset& dataset) {
  return fit_cosine(dataset.points());
}

}  // namespace lorabam

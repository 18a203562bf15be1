#pragma once

// Boxed-abstraction monitor: one axis-aligned box per cluster, enlarged by a
// shared factor times a per-dimension scale. A query is accepted when it lies
// inside at least one enlarged box.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lorabam/clustering.hpp"
#include "lorabam/error.hpp"
#include "lorabam/feature_store.hpp"

namespace lorabam {

/// How a box is widened per dimension.
///  - sigma: by delta * (standard deviation of the cluster along that axis)
///  - ratio: by delta * (half the box width), so delta = 0.05 grows each side
///    length by 5%
enum class EnlargementMode { sigma, ratio };

inline std::string_view to_string(EnlargementMode mode) {
  return mode == EnlargementMode::sigma ? "sigma" : "ratio";
}

inline EnlargementMode parse_enlargement_mode(std::string_view text) {
  if (text == "sigma") return EnlargementMode::sigma;
  if (text == "ratio") return EnlargementMode::ratio;
  throw UsageError("unknown enlargement mode '" + std::string(text) + "'");
}

struct ClusterBox {
  Vector lower;
  Vector upper;
  /// Population standard deviation of the cluster per dimension.
  Vector sigma;

  std::size_t dim() const noexcept { return lower.size(); }

  bool operator==(const ClusterBox&) const = default;
};

/// Min/max/population-std box around a set of points.
inline ClusterBox fit_box(std::span<const Vector* const> members) {
  const std::size_t d = members.front()->size();
  ClusterBox box{*members.front(), *members.front(), Vector(d, 0.0)};
  Vector mean(d, 0.0);
  for (const Vector* p : members) {
    for (std::size_t j = 0; j < d; ++j) {
      box.lower[j] = std::min(box.lower[j], (*p)[j]);
      box.upper[j] = std::max(box.upper[j], (*p)[j]);
      mean[j] += (*p)[j];
    }
  }
  const double n = static_cast<double>(members.size());
  for (auto& v : mean) v /= n;
  for (const Vector* p : members) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = (*p)[j] - mean[j];
      box.sigma[j] += dev * dev;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    // constant coordinate: exactly zero
    box.sigma[j] = box.lower[j] == box.upper[j] ? 0.0 : std::sqrt(box.sigma[j] / n);
  }
  return box;
}

class BamMonitor {
 public:
  BamMonitor() = default;

  BamMonitor(std::vector<ClusterBox> boxes, double delta = 0.0,
             EnlargementMode mode = EnlargementMode::sigma)
      : boxes_(std::move(boxes)), delta_(delta), mode_(mode) {
    if (boxes_.empty()) throw DataError("a BAM monitor needs at least one box");
    dim_ = boxes_.front().dim();
    if (dim_ == 0) throw DataError("boxes must have positive dimension");
    check_delta(delta_);
    for (const auto& b : boxes_) {
      if (b.lower.size() != dim_ || b.upper.size() != dim_ ||
          b.sigma.size() != dim_) {
        throw DataError("box dimension mismatch");
      }
      for (std::size_t j = 0; j < dim_; ++j) {
        if (!std::isfinite(b.lower[j]) || !std::isfinite(b.upper[j]) ||
            !std::isfinite(b.sigma[j])) {
          throw DataError("box bounds must be finite");
        }
        if (b.lower[j] > b.upper[j]) throw DataError("box has lower > upper");
        if (b.sigma[j] < 0.0) throw DataError("box has negative sigma");
      }
    }
    scale_.reserve(boxes_.size());
    for (const auto& b : boxes_) {
      Vector s(dim_);
      for (std::size_t j = 0; j < dim_; ++j) {
        s[j] = mode_ == EnlargementMode::sigma ? b.sigma[j]
                                               : (b.upper[j] - b.lower[j]) / 2.0;
      }
      scale_.push_back(std::move(s));
    }
    rebuild_bounds();
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return boxes_.size(); }
  double delta() const noexcept { return delta_; }
  EnlargementMode mode() const noexcept { return mode_; }
  const std::vector<ClusterBox>& boxes() const noexcept { return boxes_; }

  /// Per-dimension enlargement unit of box `i` (sigma or half-width).
  std::span<const double> scale(std::size_t i) const { return scale_[i]; }
  std::span<const double> enlarged_lower(std::size_t i) const { return lo_[i]; }
  std::span<const double> enlarged_upper(std::size_t i) const { return hi_[i]; }

  /// Copy with a different enlargement factor.
  BamMonitor with_delta(double delta) const {
    check_delta(delta);
    BamMonitor copy = *this;
    copy.delta_ = delta;
    copy.rebuild_bounds();
    return copy;
  }

  /// True iff some enlarged box holds `x`. O(m*d), early exit per box.
  /// A coordinate passes when its normalized excess over the box is at most
  /// delta(), so contains(x) == (margin_score(x) <= delta()) holds exactly.
  bool contains(std::span<const double> x) const {
    check_query(x);
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      const auto& b = boxes_[i];
      bool inside = true;
      for (std::size_t j = 0; j < dim_ && inside; ++j) {
        inside = required_factor(b.lower[j], b.upper[j], scale_[i][j], x[j]) <= delta_;
      }
      if (inside) return true;
    }
    return false;
  }

  bool accepts(std::span<const double> x) const { return contains(x); }

  /// Smallest enlargement factor at which `x` would be accepted (+inf when a
  /// zero-scale dimension is violated).
  double margin_score(std::span<const double> x) const {
    check_query(x);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      double required = 0.0;
      const auto& b = boxes_[i];
      for (std::size_t j = 0; j < dim_ && required < best; ++j) {
        required = std::max(
            required, required_factor(b.lower[j], b.upper[j], scale_[i][j], x[j]));
      }
      best = std::min(best, required);
    }
    return best;
  }

  bool operator==(const BamMonitor& other) const {
    return dim_ == other.dim_ && boxes_ == other.boxes_ &&
           delta_ == other.delta_ && mode_ == other.mode_;
  }

  /// Excess of `v` beyond [lower, upper] in units of `s`: 0 inside,
  /// +inf outside when s == 0.
  static double required_factor(double lower, double upper, double s,
                                double v) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (v < lower) return s > 0.0 ? (lower - v) / s : inf;
    if (v > upper) return s > 0.0 ? (v - upper) / s : inf;
    return 0.0;
  }

 private:
  static void check_delta(double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
      throw UsageError("enlargement factor must be finite and >= 0");
    }
  }

  void check_query(std::span<const double> x) const {
    if (x.size() != dim_) {
      throw DataError("dimension mismatch: query has " +
                      std::to_string(x.size()) + ", monitor has " +
                      std::to_string(dim_));
    }
    for (double v : x) {
      if (!std::isfinite(v)) throw DataError("query has a non-finite coordinate");
    }
  }

  void rebuild_bounds() {
    lo_.assign(boxes_.size(), Vector(dim_));
    hi_.assign(boxes_.size(), Vector(dim_));
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      for (std::size_t j = 0; j < dim_; ++j) {
        lo_[i][j] = boxes_[i].lower[j] - delta_ * scale_[i][j];
        hi_[i][j] = boxes_[i].upper[j] + delta_ * scale_[i][j];
      }
    }
  }

  std::size_t dim_ = 0;
  std::vector<ClusterBox> boxes_;
  double delta_ = 0.0;
  EnlargementMode mode_ = EnlargementMode::sigma;
  std::vector<Vector> scale_;
  std::vector<Vector> lo_, hi_;
};

/// One box per cluster of `model`, enlargement factor 0.
inline BamMonitor fit_boxes(const std::vector<Vector>& points,
                            const ClusterModel& model,
                            EnlargementMode mode = EnlargementMode::sigma) {
  if (model.assignments.size() != points.size()) {
    throw DataError("cluster assignments (" +
                    std::to_string(model.assignments.size()) +
                    ") do not match the dataset size (" +
                    std::to_string(points.size()) + ")");
  }
  std::vector<std::vector<const Vector*>> members(model.m);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (model.assignments[i] >= model.m) {
      throw DataError("cluster assignment out of range");
    }
    members[model.assignments[i]].push_back(&points[i]);
  }
  std::vector<ClusterBox> boxes;
  boxes.reserve(model.m);
  for (const auto& cluster : members) {
    if (cluster.empty()) throw DataError("cluster model has an empty cluster");
    boxes.push_back(fit_box(cluster));
  }
  return BamMonitor(std::move(boxes), 0.0, mode);
}

inline BamMonitor fit_boxes(const Dataset& dataset, const ClusterModel& model,
                            EnlargementMode mode = EnlargementMode::sigma) {
  return fit_boxes(dataset.points(), model, mode);
}

}  // namespace lorabam

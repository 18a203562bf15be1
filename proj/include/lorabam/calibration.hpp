#pragma once

// Threshold selection on in-distribution calibration data. The threshold is
// the nearest-rank quantile of observed scores at the target accept rate
// (the "TPR = 95%" / FPR95 operating point), which guarantees at least
// ceil(target * n) calibration points are accepted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lorabam/bam_monitor.hpp"
#include "lorabam/baselines.hpp"
#include "lorabam/error.hpp"
#include "lorabam/feature_store.hpp"

namespace lorabam {

inline constexpr double kDefaultTargetTpr = 0.95;

/// Enlargement factors reported alongside the calibrated operating point.
inline const std::vector<double>& fixed_delta_grid() {
  static const std::vector<double> grid{0.2, 0.4, 0.8, 1.0};
  return grid;
}

enum class ScoreKind { mahalanobis, cosine };

inline std::string_view to_string(ScoreKind kind) {
  return kind == ScoreKind::mahalanobis ? "mahalanobis" : "cosine";
}

struct CalibrationResult {
  double target_tpr = kDefaultTargetTpr;
  double threshold = 0.0;
  double achieved_id_accept_rate = 0.0;
  std::size_t n_calibration = 0;
  std::size_t accepted = 0;
};

namespace detail {

inline void check_target(double target_tpr) {
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) {
    throw UsageError("target TPR must lie in (0, 1]");
  }
}

/// k-th smallest (ascending) or k-th largest (descending) of `scores`.
inline double rank_select(std::vector<double> scores, std::size_t k,
                          bool descending) {
  auto nth = scores.begin() + static_cast<std::ptrdiff_t>(k - 1);
  if (descending) {
    std::nth_element(scores.begin(), nth, scores.end(), std::greater<>{});
  } else {
    std::nth_element(scores.begin(), nth, scores.end());
  }
  return *nth;
}

inline CalibrationResult finish(std::span<const double> scores,
                                double target_tpr, double threshold,
                                bool higher_is_id) {
  CalibrationResult r;
  r.target_tpr = target_tpr;
  r.threshold = threshold;
  r.n_calibration = scores.size();
  r.accepted = static_cast<std::size_t>(std::count_if(
      scores.begin(), scores.end(), [&](double s) {
        return higher_is_id ? s >= threshold : s <= threshold;
      }));
  r.achieved_id_accept_rate =
      static_cast<double>(r.accepted) / static_cast<double>(scores.size());
  return r;
}

}  // namespace detail

/// Threshold for a score monitor from its calibration scores. Mahalanobis
/// accepts distance <= tau (k-th smallest); cosine accepts similarity >= tau
/// (k-th largest); k = ceil(target_tpr * n).
inline CalibrationResult calibrate_score_monitor(ScoreKind kind,
                                                 std::span<const double> scores,
                                                 double target_tpr =
                                                     kDefaultTargetTpr) {
  detail::check_target(target_tpr);
  if (scores.empty()) throw DataError("no calibration scores");
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("NaN calibration score");
    if (!std::isfinite(s)) throw NumericError("non-finite calibration score");
  }
  const std::size_t k = nearest_rank(target_tpr, scores.size());
  const bool higher_is_id = kind == ScoreKind::cosine;
  const double tau = detail::rank_select(
      std::vector<double>(scores.begin(), scores.end()), k, higher_is_id);
  return detail::finish(scores, target_tpr, tau, higher_is_id);
}

template <typename Monitor>
std::vector<double> score_all(const Monitor& monitor, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& fv : data) out.push_back(monitor.score(fv.vector));
  return out;
}

inline std::vector<double> margin_scores(const BamMonitor& monitor,
                                         const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& fv : data) out.push_back(monitor.margin_score(fv.vector));
  return out;
}

/// Delta = k-th smallest margin score over `calib`.
inline CalibrationResult calibrate_bam(const BamMonitor& monitor,
                                       const Dataset& calib,
                                       double target_tpr = kDefaultTargetTpr) {
  detail::check_target(target_tpr);
  if (calib.empty()) throw DataError("empty calibration set");
  if (calib.dim() != monitor.dim()) {
    throw DataError("calibration data has dimension " +
                    std::to_string(calib.dim()) + ", monitor has " +
                    std::to_string(monitor.dim()));
  }
  const auto scores = margin_scores(monitor, calib);
  const std::size_t k = nearest_rank(target_tpr, scores.size());
  const double delta = detail::rank_select(scores, k, false);
  if (!std::isfinite(delta)) {
    throw NumericError(
        "calibration quantile is unbounded: too many calibration vectors "
        "leave a zero-variance dimension of every box");
  }
  return detail::finish(scores, target_tpr, delta, false);
}

inline MahalanobisMonitor calibrated(const MahalanobisMonitor& monitor,
                                     const CalibrationResult& result) {
  return monitor.with_threshold(result.threshold);
}

inline CosineMonitor calibrated(const CosineMonitor& monitor,
                                const CalibrationResult& result) {
  return monitor.with_threshold(result.threshold);
}

inline BamMonitor calibrated(const BamMonitor& monitor,
                             const CalibrationResult& result) {
  return monitor.with_delta(result.threshold);
}

inline CalibrationResult calibrate_mahalanobis(const MahalanobisMonitor& m,
                                               const Dataset& calib,
                                               double target_tpr =
                                                   kDefaultTargetTpr) {
  if (calib.empty()) throw DataError("empty calibration set");
  const auto scores = score_all(m, calib);
  return calibrate_score_monitor(ScoreKind::mahalanobis, scores, target_tpr);
}

inline CalibrationResult calibrate_cosine(const CosineMonitor& m,
                                          const Dataset& calib,
                                          double target_tpr =
                                              kDefaultTargetTpr) {
  if (calib.empty()) throw DataError("empty calibration set");
  const auto scores = score_all(m, calib);
  return calibrate_score_monitor(ScoreKind::cosine, scores, target_tpr);
}

}  // namespace lorabam

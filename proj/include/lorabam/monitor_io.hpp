#pragma once

// JSON persistence for all monitor kinds. Every file carries "version" and
// "kind"; doubles are written in shortest round-trip form so a save/load
// cycle reproduces every field exactly.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include <json.hpp>

#include "lorabam/bam_monitor.hpp"
#include "lorabam/baselines.hpp"
#include "lorabam/error.hpp"

namespace lorabam {

inline constexpr int kMonitorFormatVersion = 1;

using AnyMonitor = std::variant<BamMonitor, MahalanobisMonitor, CosineMonitor>;

inline std::string monitor_kind(const AnyMonitor& monitor) {
  switch (monitor.index()) {
    case 0: return "bam";
    case 1: return "mahalanobis";
    default: return "cosine";
  }
}

inline std::size_t monitor_dim(const AnyMonitor& monitor) {
  return std::visit([](const auto& m) { return m.dim(); }, monitor);
}

inline nlohmann::json to_json(const BamMonitor& m) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : m.boxes()) {
    boxes.push_back({{"lower", b.lower}, {"upper", b.upper}, {"sigma", b.sigma}});
  }
  return {{"version", kMonitorFormatVersion},
          {"kind", "bam"},
          {"dim", m.dim()},
          {"delta", m.delta()},
          {"enlargement_mode", std::string(to_string(m.mode()))},
          {"boxes", std::move(boxes)}};
}

inline nlohmann::json to_json(const MahalanobisMonitor& m) {
  nlohmann::json cov = nlohmann::json::array();
  const auto& c = m.covariance();
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < c.cols(); ++k) row.push_back(c(r, k));
    cov.push_back(std::move(row));
  }
  nlohmann::json threshold =
      m.threshold() ? nlohmann::json(*m.threshold()) : nlohmann::json(nullptr);
  return {{"version", kMonitorFormatVersion},
          {"kind", "mahalanobis"},
          {"mean", m.mean()},
          {"covariance", std::move(cov)},
          {"epsilon", m.epsilon()},
          {"threshold", std::move(threshold)}};
}

inline nlohmann::json to_json(const CosineMonitor& m) {
  nlohmann::json threshold =
      m.threshold() ? nlohmann::json(*m.threshold()) : nlohmann::json(nullptr);
  return {{"version", kMonitorFormatVersion},
          {"kind", "cosine"},
          {"mean", m.mean()},
          {"threshold", std::move(threshold)}};
}

inline nlohmann::json to_json(const AnyMonitor& monitor) {
  return std::visit([](const auto& m) { return to_json(m); }, monitor);
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw DataError(std::string("monitor file is missing \"") + key + "\"");
  }
  return *it;
}

inline Vector numbers(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array");
  Vector out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(std::string(what) + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

inline double number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw DataError(std::string(what) + " must be a number");
  return j.get<double>();
}

inline std::optional<double> optional_number(const nlohmann::json& j,
                                             const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return number(*it, key);
}

inline void check_version(const nlohmann::json& j) {
  const auto& v = field(j, "version");
  if (!(v.is_number_integer() && v.get<long long>() == kMonitorFormatVersion)) {
    throw VersionError("unsupported monitor file version " + v.dump() +
                       " (expected " + std::to_string(kMonitorFormatVersion) +
                       ")");
  }
}

}  // namespace detail

inline AnyMonitor monitor_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("monitor file must hold a JSON object");
  detail::check_version(j);
  const auto& kind_field = detail::field(j, "kind");
  if (!kind_field.is_string()) throw DataError("\"kind\" must be a string");
  const auto kind = kind_field.get<std::string>();

  if (kind == "bam") {
    const auto& dim_field = detail::field(j, "dim");
    if (!dim_field.is_number_unsigned()) {
      throw DataError("\"dim\" must be a positive integer");
    }
    const auto dim = dim_field.get<std::size_t>();
    const auto& mode_field = detail::field(j, "enlargement_mode");
    if (!mode_field.is_string()) throw DataError("\"enlargement_mode\" must be a string");
    const auto& boxes_field = detail::field(j, "boxes");
    if (!boxes_field.is_array()) throw DataError("\"boxes\" must be an array");
    std::vector<ClusterBox> boxes;
    for (const auto& b : boxes_field) {
      if (!b.is_object()) throw DataError("box entry must be an object");
      boxes.push_back({detail::numbers(detail::field(b, "lower"), "lower"),
                       detail::numbers(detail::field(b, "upper"), "upper"),
                       detail::numbers(detail::field(b, "sigma"), "sigma")});
    }
    EnlargementMode mode;
    try {
      mode = parse_enlargement_mode(mode_field.get<std::string>());
    } catch (const UsageError& e) {
      throw DataError(e.what());
    }
    BamMonitor monitor(std::move(boxes),
                       detail::number(detail::field(j, "delta"), "delta"), mode);
    if (monitor.dim() != dim) throw DataError("\"dim\" disagrees with the boxes");
    return monitor;
  }
  if (kind == "mahalanobis") {
    Vector mean = detail::numbers(detail::field(j, "mean"), "mean");
    const auto& cov_field = detail::field(j, "covariance");
    if (!cov_field.is_array() || cov_field.size() != mean.size()) {
      throw DataError("covariance must be a d x d array");
    }
    const auto d = static_cast<Eigen::Index>(mean.size());
    Eigen::MatrixXd cov(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      const Vector row = detail::numbers(cov_field[static_cast<std::size_t>(r)],
                                         "covariance row");
      if (row.size() != mean.size()) throw DataError("covariance must be a d x d array");
      for (Eigen::Index k = 0; k < d; ++k) cov(r, k) = row[static_cast<std::size_t>(k)];
    }
    return MahalanobisMonitor(std::move(mean), std::move(cov),
                              detail::number(detail::field(j, "epsilon"), "epsilon"),
                              detail::optional_number(j, "threshold"));
  }
  if (kind == "cosine") {
    return CosineMonitor(detail::numbers(detail::field(j, "mean"), "mean"),
                         detail::optional_number(j, "threshold"));
  }
  throw DataError("unknown monitor kind '" + kind + "'");
}

inline std::string dump_monitor(const AnyMonitor& monitor) {
  return to_json(monitor).dump(2) + "\n";
}

inline AnyMonitor parse_monitor(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed monitor file: ") + e.what(),
                    std::nullopt, e.byte);
  }
  return monitor_from_json(j);
}

inline void save_monitor(const std::filesystem::path& path,
                         const AnyMonitor& monitor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write monitor file " + path.string());
  out << dump_monitor(monitor);
  if (!out) throw DataError("write failed for " + path.string());
}

inline AnyMonitor load_monitor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open monitor file " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};
  return parse_monitor(text);
}

}  // namespace lorabam

#pragma once

// Feature-vector datasets and their JSON Lines interchange format.
//
// One record per line:
//   {"id":"q17","vector":[0.25,-1.5,3],"meta":{"dataset":"medqa"}}
// "meta" is optional. Coordinates are written as the shortest decimal text
// that parses back to the same IEEE-754 double.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lorabam/error.hpp"
#include "lorabam/random.hpp"

namespace lorabam {

using Vector = std::vector<double>;

enum class Role { train, calibration, test };

inline std::string_view to_string(Role role) {
  switch (role) {
    case Role::train: return "train";
    case Role::calibration: return "calibration";
    case Role::test: return "test";
  }
  return "test";
}

struct FeatureVector {
  std::string id;
  Vector vector;
  std::map<std::string, std::string> meta;

  bool operator==(const FeatureVector&) const = default;
};

/// An ordered, immutable collection of equal-dimension feature vectors with
/// unique ids.
class Dataset {
 public:
  Dataset() = default;

  /// Validates the invariants. `dim` is inferred from the first vector unless
  /// given; an empty dataset needs an explicit `dim` to be usable.
  Dataset(std::string name, Role role, std::vector<FeatureVector> vectors,
          std::optional<std::size_t> dim = std::nullopt)
      : name_(std::move(name)), role_(role), vectors_(std::move(vectors)) {
    if (dim) {
      dim_ = *dim;
    } else if (!vectors_.empty()) {
      dim_ = vectors_.front().vector.size();
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(vectors_.size());
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
      const auto& fv = vectors_[i];
      check_record(fv, dim_, i + 1);
      if (!seen.insert(fv.id).second) {
        throw DataError("duplicate id '" + fv.id + "'", i + 1);
      }
    }
  }

  const std::string& name() const noexcept { return name_; }
  Role role() const noexcept { return role_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool empty() const noexcept { return vectors_.empty(); }

  const std::vector<FeatureVector>& vectors() const noexcept {
    return vectors_;
  }
  const FeatureVector& operator[](std::size_t i) const { return vectors_[i]; }
  std::span<const double> point(std::size_t i) const {
    return vectors_[i].vector;
  }

  auto begin() const noexcept { return vectors_.begin(); }
  auto end() const noexcept { return vectors_.end(); }

  std::vector<Vector> points() const {
    std::vector<Vector> out;
    out.reserve(vectors_.size());
    for (const auto& fv : vectors_) out.push_back(fv.vector);
    return out;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(vectors_.size());
    for (const auto& fv : vectors_) out.push_back(fv.id);
    return out;
  }

  /// Same vectors under a different name/role.
  Dataset relabeled(std::string name, Role role) const {
    Dataset copy = *this;
    copy.name_ = std::move(name);
    copy.role_ = role;
    return copy;
  }

  bool operator==(const Dataset&) const = default;

  /// Throws DataError when `fv` cannot belong to a dataset of dimension `dim`.
  static void check_record(const FeatureVector& fv, std::size_t dim,
                           std::optional<std::size_t> line = std::nullopt) {
    if (fv.vector.empty()) {
      throw DataError("record '" + fv.id + "' has an empty vector", line);
    }
    if (fv.vector.size() != dim) {
      throw DataError("dimension mismatch: record '" + fv.id + "' has " +
                          std::to_string(fv.vector.size()) + ", expected " +
                          std::to_string(dim),
                      line);
    }
    for (std::size_t j = 0; j < fv.vector.size(); ++j) {
      if (!std::isfinite(fv.vector[j])) {
        throw DataError("record '" + fv.id + "' has a non-finite coordinate " +
                            "at index " + std::to_string(j),
                        line);
      }
    }
  }

 private:
  std::string name_;
  Role role_ = Role::test;
  std::size_t dim_ = 0;
  std::vector<FeatureVector> vectors_;
};

namespace detail {

/// Shortest round-trip text for a finite double. Negative zero is spelled
/// "-0.0" so JSON readers do not read it back as the integer 0.
inline void append_double(std::string& out, double value) {
  if (value == 0.0 && std::signbit(value)) {
    out += "-0.0";
    return;
  }
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

inline void append_json_string(std::string& out, const std::string& s) {
  out += nlohmann::json(s).dump();
}

}  // namespace detail

/// Canonical single-line serialization of one record (no trailing newline).
inline std::string format_record(const FeatureVector& fv) {
  std::string out = "{\"id\":";
  detail::append_json_string(out, fv.id);
  out += ",\"vector\":[";
  for (std::size_t j = 0; j < fv.vector.size(); ++j) {
    if (j) out += ',';
    detail::append_double(out, fv.vector[j]);
  }
  out += ']';
  if (!fv.meta.empty()) {
    out += ",\"meta\":{";
    bool first = true;
    for (const auto& [key, value] : fv.meta) {
      if (!first) out += ',';
      first = false;
      detail::append_json_string(out, key);
      out += ':';
      detail::append_json_string(out, value);
    }
    out += '}';
  }
  out += '}';
  return out;
}

inline FeatureVector parse_record(std::string_view line,
                                  std::size_t line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), line_number,
                    e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid JSON value: ") + e.what(), line_number);
  }
  if (!j.is_object()) throw DataError("record is not an object", line_number);

  FeatureVector fv;
  for (const auto& [key, value] : j.items()) {
    if (key == "id") {
      if (!value.is_string()) {
        throw DataError("\"id\" must be a string", line_number);
      }
      fv.id = value.get<std::string>();
    } else if (key == "vector") {
      if (!value.is_array()) {
        throw DataError("\"vector\" must be an array", line_number);
      }
      fv.vector.reserve(value.size());
      for (const auto& c : value) {
        if (!c.is_number()) {
          throw DataError("\"vector\" holds a non-number", line_number);
        }
        fv.vector.push_back(c.get<double>());
      }
    } else if (key == "meta") {
      if (!value.is_object()) {
        throw DataError("\"meta\" must be an object", line_number);
      }
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) {
          throw DataError("meta value for '" + mk + "' must be a string",
                          line_number);
        }
        fv.meta.emplace(mk, mv.get<std::string>());
      }
    } else {
      throw DataError("unknown field '" + key + "'", line_number);
    }
  }
  if (!j.contains("id")) throw DataError("missing \"id\"", line_number);
  if (!j.contains("vector")) throw DataError("missing \"vector\"", line_number);
  return fv;
}

/// Reads JSON Lines from `in`. Dimension comes from `expected_dim` when given,
/// otherwise from the first record.
inline Dataset read_dataset(std::istream& in, std::string name,
                            Role role = Role::test,
                            std::optional<std::size_t> expected_dim =
                                std::nullopt) {
  std::vector<FeatureVector> vectors;
  std::unordered_set<std::string> seen;
  std::optional<std::size_t> dim = expected_dim;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw DataError("empty line", line_number);
    FeatureVector fv = parse_record(line, line_number);
    if (!dim) dim = fv.vector.size();
    Dataset::check_record(fv, *dim, line_number);
    if (!seen.insert(fv.id).second) {
      throw DataError("duplicate id '" + fv.id + "'", line_number);
    }
    vectors.push_back(std::move(fv));
  }
  if (vectors.empty()) throw DataError("no records in '" + name + "'");
  return Dataset(std::move(name), role, std::move(vectors), dim);
}

inline Dataset load_dataset(const std::filesystem::path& path,
                            std::optional<std::size_t> expected_dim =
                                std::nullopt,
                            std::optional<std::string> name = std::nullopt,
                            Role role = Role::test) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  return read_dataset(in, name ? *name : path.stem().string(), role,
                      expected_dim);
}

inline void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& fv : dataset) out << format_record(fv) << '\n';
}

inline std::string serialize_dataset(const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(out, dataset);
  return out.str();
}

inline void save_dataset(const std::filesystem::path& path,
                         const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write feature file " + path.string());
  write_dataset(out, dataset);
  if (!out) throw DataError("write failed for " + path.string());
}

/// ceil(level * n), clamped to [1, n]. The small slack absorbs representation
/// error such as 0.95 * 20 evaluating to 19.000000000000004.
inline std::size_t nearest_rank(double level, std::size_t n) {
  const double raw = level * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Deterministic held-out split. The calibration part receives
/// ceil(fraction * n) vectors; both parts keep the original relative order.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                                 double calibration_fraction,
                                                 std::uint64_t seed) {
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw UsageError("calibration fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.size();
  if (n < 2) throw DataError("dataset too small to split");
  const std::size_t n_calib = nearest_rank(calibration_fraction, n);
  if (n_calib >= n) {
    throw DataError("calibration fraction leaves no training vectors");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  std::vector<bool> is_calib(n, false);
  for (std::size_t i = 0; i < n_calib; ++i) is_calib[order[i]] = true;

  std::vector<FeatureVector> train, calib;
  train.reserve(n - n_calib);
  calib.reserve(n_calib);
  for (std::size_t i = 0; i < n; ++i) {
    (is_calib[i] ? calib : train).push_back(dataset[i]);
  }
  return {Dataset(dataset.name(), Role::train, std::move(train), dataset.dim()),
          Dataset(dataset.name(), Role::calibration, std::move(calib),
                  dataset.dim())};
}

}  // namespace lorabam

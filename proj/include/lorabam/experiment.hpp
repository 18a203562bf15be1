#pragma once

// The fit -> calibrate -> evaluate pipeline behind `bam eval`, configured by a
// TOML run file:
//
//   seed = 1
//   features = "train.jsonl"         # in-distribution training features
//   calibration = "holdout"          # "holdout" (default), "train" or "file"
//   calibration_features = "c.jsonl" # required when calibration = "file"
//   calib_fraction = 0.2
//   target_tpr = 0.95
//
//   [[monitor]]                      # a single [monitor] table also works
//   kind = "bam"                     # bam | mahalanobis | cosine
//   clusters = 8                     # 0 or absent: round(sqrt(n))
//   deltas = [0.2, 0.4, 0.8, 1.0]    # fixed-delta rows
//   calibrate = true                 # add the calibrated row
//   enlargement = "sigma"            # or "ratio"
//
//   [[dataset]]
//   path = "anatomy.jsonl"
//   name = "Anatomy"
//   role = "near_ood"                # id | near_ood | far_ood
//
// Relative paths resolve against the directory of the run file.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <toml++/toml.hpp>

#include "lorabam/bam_monitor.hpp"
#include "lorabam/baselines.hpp"
#include "lorabam/calibration.hpp"
#include "lorabam/clustering.hpp"
#include "lorabam/error.hpp"
#include "lorabam/eval_harness.hpp"
#include "lorabam/feature_store.hpp"
#include "lorabam/random.hpp"

namespace lorabam {

enum class CalibrationSource { holdout, train, file };

inline std::string_view to_string(CalibrationSource s) {
  switch (s) {
    case CalibrationSource::holdout: return "holdout";
    case CalibrationSource::train: return "train";
    case CalibrationSource::file: return "file";
  }
  return "holdout";
}

inline CalibrationSource parse_calibration_source(std::string_view text) {
  if (text == "holdout") return CalibrationSource::holdout;
  if (text == "train") return CalibrationSource::train;
  if (text == "file") return CalibrationSource::file;
  throw UsageError("unknown calibration source '" + std::string(text) + "'");
}

struct MonitorSpec {
  std::string kind = "bam";
  std::size_t clusters = 0;
  std::size_t max_iter = 100;
  double tol = 1e-6;
  EnlargementMode enlargement = EnlargementMode::sigma;
  std::vector<double> deltas;
  bool calibrate = true;
  double epsilon_scale = kDefaultEpsilonScale;
};

struct DatasetSpec {
  std::filesystem::path path;
  std::string name;
  DatasetRole role = DatasetRole::near_ood;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path features;
  CalibrationSource calibration = CalibrationSource::holdout;
  std::filesystem::path calibration_features;
  double calib_fraction = 0.2;
  double target_tpr = kDefaultTargetTpr;
  std::vector<MonitorSpec> monitors;
  std::vector<DatasetSpec> datasets;
};

namespace detail {

template <typename T>
T toml_get(const toml::node_view<const toml::node>& node, const char* key, T fallback) {
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node.value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node.as_boolean()) return v->get();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node.as_string()) return v->get();
  } else {
    if (auto v = node.as_integer()) {
      if (v->get() < 0) throw UsageError(std::string("\"") + key + "\" must be non-negative");
      return static_cast<T>(v->get());
    }
  }
  throw UsageError(std::string("run config: \"") + key + "\" has the wrong type");
}

inline MonitorSpec parse_monitor_spec(const toml::table& t) {
  MonitorSpec spec;
  const toml::table& v = t;
  spec.kind = toml_get<std::string>(v["kind"], "kind", "bam");
  if (spec.kind != "bam" && spec.kind != "mahalanobis" && spec.kind != "cosine") {
    throw UsageError("unknown monitor kind '" + spec.kind + "'");
  }
  spec.clusters = toml_get<std::size_t>(v["clusters"], "clusters", 0);
  spec.max_iter = toml_get<std::size_t>(v["max_iter"], "max_iter", 100);
  spec.tol = toml_get<double>(v["tol"], "tol", 1e-6);
  spec.enlargement = parse_enlargement_mode(
      toml_get<std::string>(v["enlargement"], "enlargement", "sigma"));
  spec.calibrate = toml_get<bool>(v["calibrate"], "calibrate", true);
  spec.epsilon_scale =
      toml_get<double>(v["epsilon_scale"], "epsilon_scale", kDefaultEpsilonScale);
  if (auto deltas = v["deltas"].as_array()) {
    for (const auto& d : *deltas) {
      auto value = d.value<double>();
      if (!value) throw UsageError("run config: \"deltas\" must hold numbers");
      spec.deltas.push_back(*value);
    }
  } else if (v["deltas"]) {
    throw UsageError("run config: \"deltas\" must be an array");
  }
  return spec;
}

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text,
                                  const std::filesystem::path& base_dir = {}) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw UsageError(std::string("run config: ") + std::string(e.description()) +
                     " at line " + std::to_string(e.source().begin.line));
  }
  const toml::table& v = root;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  RunConfig cfg;
  cfg.seed = detail::toml_get<std::uint64_t>(v["seed"], "seed", 0);
  if (auto f = detail::toml_get<std::string>(v["features"], "features", ""); !f.empty()) {
    cfg.features = resolve(f);
  }
  cfg.calibration = parse_calibration_source(
      detail::toml_get<std::string>(v["calibration"], "calibration", "holdout"));
  if (auto f = detail::toml_get<std::string>(v["calibration_features"],
                                             "calibration_features", "");
      !f.empty()) {
    cfg.calibration_features = resolve(f);
    if (!v["calibration"]) cfg.calibration = CalibrationSource::file;
  }
  cfg.calib_fraction = detail::toml_get<double>(v["calib_fraction"], "calib_fraction", 0.2);
  cfg.target_tpr = detail::toml_get<double>(v["target_tpr"], "target_tpr", kDefaultTargetTpr);

  if (auto arr = root["monitor"].as_array()) {
    for (const auto& node : *arr) {
      auto t = node.as_table();
      if (!t) throw UsageError("run config: [[monitor]] entries must be tables");
      cfg.monitors.push_back(detail::parse_monitor_spec(*t));
    }
  } else if (auto t = root["monitor"].as_table()) {
    cfg.monitors.push_back(detail::parse_monitor_spec(*t));
  }

  if (auto arr = root["dataset"].as_array()) {
    for (const auto& node : *arr) {
      auto t = node.as_table();
      if (!t) throw UsageError("run config: [[dataset]] entries must be tables");
      const toml::table& dv = *t;
      DatasetSpec ds;
      const auto path = detail::toml_get<std::string>(dv["path"], "path", "");
      if (path.empty()) throw UsageError("run config: dataset without a path");
      ds.path = resolve(path);
      ds.name = detail::toml_get<std::string>(dv["name"], "name",
                                              ds.path.stem().string());
      ds.role = parse_dataset_role(
          detail::toml_get<std::string>(dv["role"], "role", "near_ood"));
      cfg.datasets.push_back(std::move(ds));
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open run config " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};
  return parse_run_config(text, path.parent_path());
}

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string tpr_label(double target) {
  return "TPR=" + format_number(target * 100.0) + "%";
}

}  // namespace detail

/// In-memory inputs of one run: every monitor is fitted on `train`,
/// calibrated on `calibration` and evaluated on `tests`.
struct RunData {
  Dataset train;
  Dataset calibration;
  std::vector<Dataset> tests;
  std::vector<DatasetRole> roles;
};

inline RunData load_run_data(const RunConfig& cfg) {
  if (cfg.features.empty()) throw UsageError("no training features configured");
  if (cfg.datasets.empty()) throw UsageError("no evaluation datasets configured");
  RunData data;
  Dataset full = load_dataset(cfg.features, std::nullopt, std::nullopt, Role::train);
  switch (cfg.calibration) {
    case CalibrationSource::holdout: {
      auto [train, calib] = split_dataset(
          full, cfg.calib_fraction, derive_seed(cfg.seed, SeedStream::split));
      data.train = std::move(train);
      data.calibration = std::move(calib);
      break;
    }
    case CalibrationSource::train:
      data.train = full;
      data.calibration = full.relabeled(full.name(), Role::calibration);
      break;
    case CalibrationSource::file:
      if (cfg.calibration_features.empty()) {
        throw UsageError("calibration = \"file\" needs calibration_features");
      }
      data.train = std::move(full);
      data.calibration = load_dataset(cfg.calibration_features, data.train.dim(),
                                      std::nullopt, Role::calibration);
      break;
  }
  for (const auto& ds : cfg.datasets) {
    data.tests.push_back(load_dataset(ds.path, data.train.dim(), ds.name, Role::test));
    data.roles.push_back(ds.role);
  }
  return data;
}

/// Fits, calibrates and evaluates every configured monitor on `data`.
/// Reports come back in config order; for BAM the fixed-delta rows precede
/// the calibrated row.
inline std::vector<EvalReport> run_experiment(const RunConfig& cfg,
                                              const RunData& data) {
  if (cfg.monitors.empty()) throw UsageError("no monitors configured");
  std::vector<EvalSet> sets;
  for (std::size_t i = 0; i < data.tests.size(); ++i) {
    sets.push_back({&data.tests[i], data.roles[i]});
  }

  nlohmann::json shared = {
      {"seed", cfg.seed},
      {"calibration_source", std::string(to_string(cfg.calibration))},
      {"n_train", data.train.size()},
      {"n_calibration", data.calibration.size()},
      {"train_ids", id_fingerprint(data.train)},
      {"calibration_ids", id_fingerprint(data.calibration)},
  };
  if (cfg.calibration == CalibrationSource::holdout) {
    shared["calib_fraction"] = cfg.calib_fraction;
  }

  std::vector<EvalReport> reports;
  for (const auto& spec : cfg.monitors) {
    nlohmann::json config = shared;
    if (spec.kind == "bam") {
      const auto model = kmeans_fit(
          data.train, {spec.clusters, derive_seed(cfg.seed, SeedStream::kmeans),
                       spec.max_iter, spec.tol});
      const auto base = fit_boxes(data.train, model, spec.enlargement);
      config["clusters"] = model.m;
      config["enlargement_mode"] = std::string(to_string(spec.enlargement));
      config["kmeans_inertia"] = model.inertia;
      for (double delta : spec.deltas) {
        auto row_config = config;
        row_config["mode"] = "fixed";
        row_config["delta"] = delta;
        reports.push_back(evaluate(base.with_delta(delta), sets, "bam",
                                   "LoRA-BAM (delta=" + detail::format_number(delta) + ")",
                                   std::move(row_config)));
      }
      if (spec.calibrate) {
        const auto result = calibrate_bam(base, data.calibration, cfg.target_tpr);
        config["mode"] = "calibrated";
        config["delta"] = result.threshold;
        config["target_tpr"] = cfg.target_tpr;
        config["achieved_id_accept_rate"] = result.achieved_id_accept_rate;
        reports.push_back(evaluate(calibrated(base, result), sets, "bam",
                                   "LoRA-BAM (" + detail::tpr_label(cfg.target_tpr) + ")",
                                   std::move(config)));
      }
    } else if (spec.kind == "mahalanobis") {
      const auto fitted = fit_mahalanobis(data.train, spec.epsilon_scale);
      const auto result = calibrate_mahalanobis(fitted, data.calibration, cfg.target_tpr);
      config["mode"] = "calibrated";
      config["threshold"] = result.threshold;
      config["epsilon"] = fitted.epsilon();
      config["target_tpr"] = cfg.target_tpr;
      config["achieved_id_accept_rate"] = result.achieved_id_accept_rate;
      reports.push_back(evaluate(calibrated(fitted, result), sets, "mahalanobis",
                                 "Mahalanobis Distance (" + detail::tpr_label(cfg.target_tpr) + ")",
                                 std::move(config)));
    } else if (spec.kind == "cosine") {
      const auto fitted = fit_cosine(data.train);
      const auto result = calibrate_cosine(fitted, data.calibration, cfg.target_tpr);
      config["mode"] = "calibrated";
      config["threshold"] = result.threshold;
      config["target_tpr"] = cfg.target_tpr;
      config["achieved_id_accept_rate"] = result.achieved_id_accept_rate;
      reports.push_back(evaluate(calibrated(fitted, result), sets, "cosine",
                                 "Cosine Similarity (" + detail::tpr_label(cfg.target_tpr) + ")",
                                 std::move(config)));
    } else {
      throw UsageError("unknown monitor kind '" + spec.kind + "'");
    }
  }
  return reports;
}

inline std::vector<EvalReport> run_eval(const RunConfig& cfg) {
  return run_experiment(cfg, load_run_data(cfg));
}

}  // namespace lorabam

// bam: fit, calibrate, score and evaluate boxed-abstraction and baseline OoD
// monitors over JSONL feature files.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include <CLI11.hpp>
#include <json.hpp>

#include "lorabam/lorabam.hpp"

namespace fs = std::filesystem;
using namespace lorabam;

namespace {

struct FitArgs {
  std::string features;
  std::string kind = "bam";
  std::size_t clusters = 0;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-6;
  std::string enlargement = "sigma";
  double epsilon_scale = kDefaultEpsilonScale;
  std::string out;
};

struct CalibrateArgs {
  std::string monitor;
  std::string features;
  std::optional<double> target_tpr;
  std::optional<double> delta;
  std::string out;
};

struct ScoreArgs {
  std::string monitor;
  std::string features;
  std::string out;
};

struct EvalArgs {
  std::string config;
  std::string out;
  std::string format = "markdown";
  std::string plot_data;
  std::string features;
  std::optional<double> calib_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> clusters;
  std::optional<std::size_t> max_iter;
  std::optional<double> tol;
  std::optional<double> target_tpr;
  std::optional<double> delta;
};

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 42;
  std::size_t dim = 8;
  double separation = 10.0;
  double std = 0.3;
  std::size_t n_per_cluster = 200;
  std::size_t n_midgap = 200;
  double calib_fraction = 0.2;
};

int run_fit(const FitArgs& a) {
  const Dataset train = load_dataset(a.features, std::nullopt, std::nullopt, Role::train);
  AnyMonitor monitor;
  if (a.kind == "bam") {
    const auto model = kmeans_fit(train, {a.clusters, a.seed, a.max_iter, a.tol});
    monitor = fit_boxes(train, model, parse_enlargement_mode(a.enlargement));
    std::cerr << "fitted " << model.m << " boxes over " << train.size()
              << " vectors (inertia " << model.inertia << ")\n";
  } else if (a.kind == "mahalanobis") {
    monitor = fit_mahalanobis(train, a.epsilon_scale);
  } else if (a.kind == "cosine") {
    monitor = fit_cosine(train);
  } else {
    throw UsageError("unknown monitor kind '" + a.kind + "'");
  }
  save_monitor(a.out, monitor);
  return 0;
}

int run_calibrate(const CalibrateArgs& a) {
  if (a.target_tpr && a.delta) {
    throw UsageError("--target-tpr and --delta are mutually exclusive");
  }
  const AnyMonitor monitor = load_monitor(a.monitor);
  const double target = a.target_tpr.value_or(kDefaultTargetTpr);
  AnyMonitor result_monitor;
  nlohmann::json summary = {{"kind", monitor_kind(monitor)}};

  if (const auto* bam = std::get_if<BamMonitor>(&monitor)) {
    if (a.delta) {
      result_monitor = bam->with_delta(*a.delta);
      summary["mode"] = "fixed";
      summary["threshold"] = *a.delta;
    } else {
      const Dataset calib = load_dataset(a.features, bam->dim(), std::nullopt,
                                         Role::calibration);
      const auto r = calibrate_bam(*bam, calib, target);
      result_monitor = calibrated(*bam, r);
      summary["mode"] = "calibrated";
      summary["threshold"] = r.threshold;
      summary["target_tpr"] = r.target_tpr;
      summary["achieved_id_accept_rate"] = r.achieved_id_accept_rate;
      summary["n_calibration"] = r.n_calibration;
    }
  } else {
    if (a.delta) throw UsageError("--delta applies to BAM monitors only");
    const Dataset calib = load_dataset(a.features, monitor_dim(monitor),
                                       std::nullopt, Role::calibration);
    CalibrationResult r;
    if (const auto* m = std::get_if<MahalanobisMonitor>(&monitor)) {
      r = calibrate_mahalanobis(*m, calib, target);
      result_monitor = calibrated(*m, r);
    } else {
      const auto& c = std::get<CosineMonitor>(monitor);
      r = calibrate_cosine(c, calib, target);
      result_monitor = calibrated(c, r);
    }
    summary["mode"] = "calibrated";
    summary["threshold"] = r.threshold;
    summary["target_tpr"] = r.target_tpr;
    summary["achieved_id_accept_rate"] = r.achieved_id_accept_rate;
    summary["n_calibration"] = r.n_calibration;
  }
  save_monitor(a.out, result_monitor);
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_score(const ScoreArgs& a) {
  const AnyMonitor monitor = load_monitor(a.monitor);
  const Dataset data = load_dataset(a.features, monitor_dim(monitor));
  std::ostringstream out;
  out << "id,score,accepted\n";
  for (const auto& fv : data) {
    std::string score;
    std::string accepted;
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          double s;
          bool calibrated_monitor = true;
          if constexpr (std::is_same_v<M, BamMonitor>) {
            s = m.margin_score(fv.vector);
          } else {
            s = m.score(fv.vector);
            calibrated_monitor = m.threshold().has_value();
          }
          detail::append_double(score, s);
          if (calibrated_monitor) accepted = m.accepts(fv.vector) ? "1" : "0";
        },
        monitor);
    out << detail::csv_field(fv.id) << ',' << score << ',' << accepted << '\n';
  }
  write_text_file(a.out, out.str());
  return 0;
}

int run_eval_command(const EvalArgs& a) {
  if (a.target_tpr && a.delta) {
    throw UsageError("--target-tpr and --delta are mutually exclusive");
  }
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config);
  if (!a.features.empty()) cfg.features = a.features;
  if (a.calib_fraction) cfg.calib_fraction = *a.calib_fraction;
  if (a.seed) cfg.seed = *a.seed;
  if (a.target_tpr) cfg.target_tpr = *a.target_tpr;
  if (cfg.monitors.empty()) {
    for (const char* kind : {"bam", "mahalanobis", "cosine"}) {
      MonitorSpec spec;
      spec.kind = kind;
      cfg.monitors.push_back(spec);
    }
  }
  for (auto& spec : cfg.monitors) {
    if (spec.kind != "bam") continue;
    if (a.clusters) spec.clusters = *a.clusters;
    if (a.max_iter) spec.max_iter = *a.max_iter;
    if (a.tol) spec.tol = *a.tol;
    if (a.delta) {
      spec.deltas = {*a.delta};
      spec.calibrate = false;
    } else if (a.target_tpr) {
      spec.calibrate = true;
    }
  }
  const auto reports = run_eval(cfg);
  emit_report(reports, parse_report_format(a.format), a.out);
  if (!a.plot_data.empty()) write_text_file(a.plot_data, format_plot_data(reports));
  return 0;
}

int run_synth(const SynthArgs& a) {
  auto cfg = SynthConfig::two_clusters(a.dim, a.separation, a.std,
                                       a.n_per_cluster, a.n_midgap, a.seed);
  cfg.calib_fraction = a.calib_fraction;
  const auto data = generate_synthetic(cfg);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_dataset(dir / "id_train.jsonl", data.id_train);
  save_dataset(dir / "id_calib.jsonl", data.id_calib);
  save_dataset(dir / "ood_midgap.jsonl", data.ood_midgap);
  std::ostringstream toml;
  toml << "seed = " << a.seed << "\n"
       << "features = \"id_train.jsonl\"\n"
       << "calibration_features = \"id_calib.jsonl\"\n"
       << "target_tpr = 0.95\n\n"
       << "[[monitor]]\nkind = \"bam\"\nclusters = 2\n"
       << "deltas = [0.2, 0.4, 0.8, 1.0]\n\n"
       << "[[monitor]]\nkind = \"mahalanobis\"\n\n"
       << "[[monitor]]\nkind = \"cosine\"\n\n"
       << "[[dataset]]\npath = \"id_calib.jsonl\"\nname = \"ID calib\"\nrole = \"id\"\n\n"
       << "[[dataset]]\npath = \"ood_midgap.jsonl\"\nname = \"Midgap\"\nrole = \"near_ood\"\n";
  write_text_file(dir / "run.toml", toml.str());
  std::cerr << "wrote " << data.id_train.size() << "/" << data.id_calib.size()
            << "/" << data.ood_midgap.size() << " vectors to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boxed-abstraction out-of-distribution monitors"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a monitor on training features");
  fit_cmd->add_option("--features", fit.features, "Training features (JSONL)")->required();
  fit_cmd->add_option("--kind", fit.kind, "bam | mahalanobis | cosine")
      ->check(CLI::IsMember({"bam", "mahalanobis", "cosine"}));
  fit_cmd->add_option("--clusters", fit.clusters, "Cluster count (0: round(sqrt(n)))");
  fit_cmd->add_option("--seed", fit.seed, "k-means seed");
  fit_cmd->add_option("--max-iter", fit.max_iter, "Lloyd iteration cap");
  fit_cmd->add_option("--tol", fit.tol, "Relative inertia tolerance");
  fit_cmd->add_option("--enlargement", fit.enlargement, "sigma | ratio")
      ->check(CLI::IsMember({"sigma", "ratio"}));
  fit_cmd->add_option("--epsilon-scale", fit.epsilon_scale,
                      "Mahalanobis covariance regularization scale");
  fit_cmd->add_option("--out", fit.out, "Monitor file to write")->required();

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Set the decision threshold");
  cal_cmd->add_option("--monitor", cal.monitor, "Monitor file")->required();
  cal_cmd->add_option("--features", cal.features, "Calibration features (JSONL)");
  auto* tpr_opt = cal_cmd->add_option("--target-tpr", cal.target_tpr,
                                      "Target ID accept rate (default 0.95)");
  auto* delta_opt = cal_cmd->add_option("--delta", cal.delta, "Fixed enlargement factor (BAM)");
  tpr_opt->excludes(delta_opt);
  cal_cmd->add_option("--out", cal.out, "Calibrated monitor file")->required();

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Per-vector scores to CSV");
  score_cmd->add_option("--monitor", score.monitor, "Monitor file")->required();
  score_cmd->add_option("--features", score.features, "Features (JSONL)")->required();
  score_cmd->add_option("--out", score.out, "CSV to write")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Full fit/calibrate/evaluate run");
  eval_cmd->add_option("--config", ev.config, "Run file (TOML)");
  eval_cmd->add_option("--out", ev.out, "Report file")->required();
  eval_cmd->add_option("--format", ev.format, "markdown | csv | json")
      ->check(CLI::IsMember({"markdown", "md", "csv", "json"}));
  eval_cmd->add_option("--plot-data", ev.plot_data, "Also write plot-data CSV");
  eval_cmd->add_option("--features", ev.features, "Training features (overrides config)");
  eval_cmd->add_option("--calib-fraction", ev.calib_fraction, "Held-out calibration fraction");
  eval_cmd->add_option("--seed", ev.seed, "Top-level seed");
  eval_cmd->add_option("--clusters", ev.clusters, "BAM cluster count");
  eval_cmd->add_option("--max-iter", ev.max_iter, "Lloyd iteration cap");
  eval_cmd->add_option("--tol", ev.tol, "Relative inertia tolerance");
  auto* ev_tpr = eval_cmd->add_option("--target-tpr", ev.target_tpr, "Target ID accept rate");
  auto* ev_delta = eval_cmd->add_option("--delta", ev.delta, "Fixed BAM enlargement factor");
  ev_tpr->excludes(ev_delta);

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synth", "Write the two-cluster synthetic datasets");
  syn_cmd->add_option("--out-dir", syn.out_dir, "Output directory")->required();
  syn_cmd->add_option("--seed", syn.seed, "Seed");
  syn_cmd->add_option("--dim", syn.dim, "Dimension");
  syn_cmd->add_option("--separation", syn.separation, "Distance between cluster centers");
  syn_cmd->add_option("--std", syn.std, "Per-axis standard deviation");
  syn_cmd->add_option("--n-per-cluster", syn.n_per_cluster, "ID vectors per cluster");
  syn_cmd->add_option("--n-midgap", syn.n_midgap, "OoD vectors at the midpoint");
  syn_cmd->add_option("--calib-fraction", syn.calib_fraction, "Held-out calibration fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*cal_cmd) {
      if (!cal.delta && cal.features.empty()) {
        throw UsageError("calibrate needs --features unless --delta is given");
      }
      return run_calibrate(cal);
    }
    if (*score_cmd) return run_score(score);
    if (*eval_cmd) return run_eval_command(ev);
    if (*syn_cmd) return run_synth(syn);
  } catch (const lorabam::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::data);
  }
  return 1;
}

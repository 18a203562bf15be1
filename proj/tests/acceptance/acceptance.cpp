// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../test_util.hpp"

namespace lb = lorabam;
using lb::Vector;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

Outcome fail(std::string why) { return {false, std::move(why)}; }

double partition_sse(const std::vector<Vector>& pts, const std::vector<std::size_t>& labels,
                     std::size_t m) {
  const std::size_t d = pts.front().size();
  std::vector<Vector> sums(m, Vector(d, 0.0));
  std::vector<double> counts(m, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) sums[labels[i]][j] += pts[i][j];
    counts[labels[i]] += 1.0;
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = sums[labels[i]][j] / counts[labels[i]];
      sse += (pts[i][j] - c) * (pts[i][j] - c);
    }
  }
  return sse;
}

double brute_force_optimum(const std::vector<Vector>& pts, std::size_t m) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> labels(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<std::size_t> counts(m, 0);
    for (auto l : labels) ++counts[l];
    if (std::find(counts.begin(), counts.end(), 0u) == counts.end()) {
      best = std::min(best, partition_sse(pts, labels, m));
    }
    std::size_t k = 0;
    while (k < n && ++labels[k] == m) labels[k++] = 0;
    if (k == n) break;
  }
  return best;
}

/// No single-point move to another cluster lowers the within-cluster SSE.
bool is_local_optimum(const std::vector<Vector>& pts, const lb::ClusterModel& model) {
  const double base = partition_sse(pts, model.assignments, model.m);
  const auto sizes = model.cluster_sizes();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (sizes[model.assignments[i]] == 1) continue;
    auto labels = model.assignments;
    for (std::size_t c = 0; c < model.m; ++c) {
      if (c == model.assignments[i]) continue;
      labels[i] = c;
      if (partition_sse(pts, labels, model.m) < base - 1e-12 * std::max(1.0, base)) {
        return false;
      }
    }
  }
  return true;
}

Outcome training_containment() {
  const auto t0 = Clock::now();
  lb::Rng rng(1001);
  std::size_t datasets = 0, checked = 0;
  for (; datasets < 120; ++datasets) {
    const std::size_t n = 1 + rng.below(500);
    const std::size_t d = 1 + rng.below(16);
    auto pts = lb::testing::random_points(rng, n, d, 0.1 + 5.0 * rng.uniform());
    if (datasets % 10 == 0) {
      for (auto& p : pts) p[0] = std::round(p[0]);  // ties and flat dimensions
    }
    std::size_t distinct = n;
    {
      auto sorted = pts;
      std::sort(sorted.begin(), sorted.end());
      distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }
    const std::size_t m = datasets % 3 == 0 ? 0 : 1 + rng.below(std::min<std::size_t>(distinct, 12));
    const auto model = lb::kmeans_fit(pts, {std::min(m, distinct), rng.next(), 100, 1e-6});
    const auto mode = datasets % 4 == 3 ? lb::EnlargementMode::ratio : lb::EnlargementMode::sigma;
    const auto monitor = lb::fit_boxes(pts, model, mode);
    for (const auto& p : pts) {
      if (!monitor.contains(p)) {
        return fail("training point rejected in dataset " + std::to_string(datasets));
      }
      ++checked;
    }
  }
  const double t = seconds_since(t0);
  if (t >= 10.0) return fail(fmt("runtime %.2f s >= 10 s", t));
  return {true, std::to_string(datasets) + " datasets, " + std::to_string(checked) +
                    " points, rejection 0, " + fmt("%.2f s", t)};
}

Outcome score_containment_equivalence() {
  const auto t0 = Clock::now();
  lb::Rng rng(1002);
  std::size_t on_boundary = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto monitor = lb::testing::random_monitor(rng, 1 + rng.below(6), 1 + rng.below(12));
    const auto x = lb::testing::random_query(rng, monitor);
    const double score = monitor.margin_score(x);
    double delta = 0.0;
    switch (trial % 4) {
      case 0: delta = 4.0 * rng.uniform(); break;
      case 1: delta = std::isfinite(score) ? score : 1e300; break;
      case 2: delta = std::isfinite(score) && score > 0.0 ? std::nextafter(score, 0.0) : 0.0; break;
      default: delta = std::isfinite(score) ? std::nextafter(score, 1e308) : 0.0; break;
    }
    if (delta == score) ++on_boundary;
    const bool in = monitor.with_delta(delta).contains(x);
    if (in != (score <= delta)) {
      return fail("mismatch at trial " + std::to_string(trial));
    }
  }
  const double t = seconds_since(t0);
  if (t >= 5.0) return fail(fmt("runtime %.2f s >= 5 s", t));
  return {true, "10000 triples (" + std::to_string(on_boundary) + " exactly on the boundary), " +
                    fmt("%.2f s", t)};
}

Outcome delta_monotonicity() {
  lb::Rng rng(1003);
  std::size_t pairs = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto base = lb::testing::random_monitor(rng, 1 + rng.below(6), 1 + rng.below(10));
    std::vector<double> deltas{0.0};
    for (int k = 0; k < 8; ++k) deltas.push_back(3.0 * rng.uniform());
    const auto x = lb::testing::random_query(rng, base);
    const double s = base.margin_score(x);
    if (std::isfinite(s)) {
      deltas.push_back(s);
      deltas.push_back(std::nextafter(s, 1e308));
    }
    std::sort(deltas.begin(), deltas.end());
    bool accepted = false;
    for (double d : deltas) {
      const bool now = base.with_delta(d).contains(x);
      if (accepted && !now) return fail("accept->reject flip at trial " + std::to_string(trial));
      accepted = now;
      ++pairs;
    }
  }
  return {true, std::to_string(pairs) + " ordered delta checks, no flips"};
}

/// tau covers k scores; the nearest observed score on the strict side of tau does not.
template <typename Accept>
Outcome check_coverage(const std::string& name, const std::vector<double>& scores, double tau,
                       bool higher_is_id, Accept accepts_at, std::size_t k) {
  std::size_t accepted = 0;
  for (double s : scores) accepted += higher_is_id ? s >= tau : s <= tau;
  if (accepts_at(tau) < k) return fail(name + " accepts fewer than k");
  if (accepted != accepts_at(tau)) return fail(name + " monitor disagrees with its scores");
  std::optional<double> next;
  for (double s : scores) {
    if (higher_is_id ? s > tau : s < tau) {
      if (!next || (higher_is_id ? s < *next : s > *next)) next = s;
    }
  }
  if (next && accepts_at(*next) >= k) return fail(name + " next observed threshold still covers");
  return {};
}

Outcome calibration_coverage() {
  lb::Rng rng(1004);
  int runs = 0;
  for (int trial = 0; trial < 60; ++trial, ++runs) {
    const std::size_t d = 1 + rng.below(8);
    const auto train = lb::testing::make_dataset(lb::testing::random_points(rng, 40 + rng.below(200), d));
    auto cpts = lb::testing::random_points(rng, 1 + rng.below(150), d, 1.0 + rng.uniform());
    if (trial % 5 == 0) {
      for (auto& p : cpts) p[0] = std::round(p[0] * 2.0) / 2.0 + 0.25;  // tied scores
    }
    const auto calib = lb::testing::make_dataset(cpts, "calib", lb::Role::calibration);
    const std::size_t k = lb::nearest_rank(0.95, calib.size());

    const auto base = lb::fit_boxes(train, lb::kmeans_fit(train, {0, rng.next(), 100, 1e-6}));
    const auto margins = lb::margin_scores(base, calib);
    const bool bam_ok = std::count_if(margins.begin(), margins.end(),
                                      [](double s) { return std::isfinite(s); }) >=
                        static_cast<std::ptrdiff_t>(k);
    if (bam_ok) {
      const auto rb = lb::calibrate_bam(base, calib, 0.95);
      auto out = check_coverage("BAM", margins, rb.threshold, false, [&](double delta) {
        const auto m = base.with_delta(delta);
        std::size_t c = 0;
        for (const auto& fv : calib) c += m.contains(fv.vector);
        return c;
      }, k);
      if (!out.pass) return out;
    }

    const auto md = lb::fit_mahalanobis(train);
    const auto md_scores = lb::score_all(md, calib);
    const auto rm = lb::calibrate_mahalanobis(md, calib, 0.95);
    auto out = check_coverage("Mahalanobis", md_scores, rm.threshold, false, [&](double tau) {
      const auto m = md.with_threshold(tau);
      std::size_t c = 0;
      for (const auto& fv : calib) c += m.accepts(fv.vector);
      return c;
    }, k);
    if (!out.pass) return out;

    const auto cs = lb::fit_cosine(train);
    const auto cs_scores = lb::score_all(cs, calib);
    const auto rc = lb::calibrate_cosine(cs, calib, 0.95);
    out = check_coverage("cosine", cs_scores, rc.threshold, true, [&](double tau) {
      const auto m = cs.with_threshold(tau);
      std::size_t c = 0;
      for (const auto& fv : calib) c += m.accepts(fv.vector);
      return c;
    }, k);
    if (!out.pass) return out;
  }
  return {true, std::to_string(runs) + " calibration sets, 3 monitors each, k = ceil(0.95 n)"};
}

Outcome kmeans_oracle() {
  std::size_t fixtures = 0;
  lb::Rng rng(1005);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t d = 1; d <= 3; ++d) {
      for (std::size_t m = 1; m <= std::min<std::size_t>(3, n); ++m) {
        for (int rep = 0; rep < 4; ++rep) {
          auto pts = lb::testing::random_points(rng, n, d, 2.0);
          if (rep == 3) {
            for (auto& p : pts) {
              for (auto& v : p) v = std::round(v);
            }
          }
          auto sorted = pts;
          std::sort(sorted.begin(), sorted.end());
          const auto distinct = static_cast<std::size_t>(
              std::unique(sorted.begin(), sorted.end()) - sorted.begin());
          if (distinct < m) {
            try {
              lb::kmeans_fit(pts, {m, 7, 100, 1e-6});
              return fail("expected an error for fewer distinct points than clusters");
            } catch (const lb::DataError&) {
            }
            continue;
          }
          const auto model = lb::kmeans_fit(pts, {m, rng.next(), 100, 1e-6});
          if (!is_local_optimum(pts, model)) {
            return fail("not a local optimum: n=" + std::to_string(n) + " d=" + std::to_string(d) +
                        " m=" + std::to_string(m));
          }
          if (model.inertia < brute_force_optimum(pts, m) - 1e-9) {
            return fail("inertia below the brute-force optimum");
          }
          ++fixtures;
        }
      }
    }
  }
  const std::vector<Vector> line{{0.0}, {1.0}, {10.0}, {11.0}};
  const double optimum = brute_force_optimum(line, 2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto model = lb::kmeans_fit(line, {2, seed, 100, 1e-6});
    if (model.inertia != optimum) return fail("1-D case missed the optimum for seed " + std::to_string(seed));
  }
  return {true, std::to_string(fixtures) + " fixtures locally optimal; 1-D case inertia " +
                    fmt("%g", optimum) + " for 50 seeds"};
}

Outcome mahalanobis_sanity() {
  lb::Rng rng(1006);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = lb::testing::random_points(rng, 2 + rng.below(100), 1 + rng.below(16),
                                                std::exp(rng.normal()));
    const auto m = lb::fit_mahalanobis(pts);
    if (m.score(m.mean()) != 0.0) return fail("distance of the mean is not exactly 0");
  }
  const lb::MahalanobisMonitor identity({0.0, 0.0}, Eigen::MatrixXd::Identity(2, 2), 1e-9);
  const double five = identity.score(Vector{3.0, 4.0});
  if (std::abs(five - 5.0) > 1e-6) return fail(fmt("distance((3,4)) = %.12g", five));
  return {true, fmt("distance(mean) = 0 on 200 fits; distance((3,4)) = %.9f", five)};
}

Outcome synthetic_midgap() {
  const auto t0 = Clock::now();
  const auto cfg = lb::SynthConfig::two_clusters(8, 10.0, 0.3, 200, 200, 42);
  const auto data = lb::generate_synthetic(cfg);

  const auto model = lb::kmeans_fit(data.id_train, {0, lb::derive_seed(cfg.seed, lb::SeedStream::kmeans), 100, 1e-6});
  const auto base = lb::fit_boxes(data.id_train, model);
  const auto bam = lb::calibrated(base, lb::calibrate_bam(base, data.id_calib, 0.95));
  const auto md_fit = lb::fit_mahalanobis(data.id_train);
  const auto md = lb::calibrated(md_fit, lb::calibrate_mahalanobis(md_fit, data.id_calib, 0.95));

  const std::vector<lb::EvalSet> sets{{&data.id_calib, lb::DatasetRole::id},
                                      {&data.ood_midgap, lb::DatasetRole::near_ood}};
  const auto rb = lb::evaluate(bam, sets, "bam");
  const auto rm = lb::evaluate(md, sets, "mahalanobis");
  const double bam_mid = rb.rows[1].rejection_rate;
  const double md_mid = rm.rows[1].rejection_rate;

  // Non-convexity: an accepted point from each cluster whose midpoint BAM rejects.
  bool witness = false;
  for (const auto& a : data.id_train) {
    if (a.id[0] != 'a' || !bam.contains(a.vector)) continue;
    for (const auto& b : data.id_train) {
      if (b.id[0] != 'b' || !bam.contains(b.vector)) continue;
      Vector mid(a.vector.size());
      for (std::size_t j = 0; j < mid.size(); ++j) mid[j] = 0.5 * (a.vector[j] + b.vector[j]);
      witness = !bam.contains(mid) && md.accepts(mid);
      break;
    }
    if (witness) break;
  }
  const double t = seconds_since(t0);
  std::ostringstream detail;
  detail << "midgap rejection BAM " << fmt("%.1f%%", 100.0 * bam_mid) << " (m=" << model.m
         << ", delta=" << bam.delta() << "), Mahalanobis " << fmt("%.1f%%", 100.0 * md_mid)
         << "; ID holdout rejection BAM " << fmt("%.1f%%", 100.0 * rb.rows[0].rejection_rate)
         << ", Mahalanobis " << fmt("%.1f%%", 100.0 * rm.rows[0].rejection_rate) << "; "
         << fmt("%.2f s", t);
  if (!(bam_mid > md_mid)) return fail("BAM not strictly higher: " + detail.str());
  if (bam_mid < 0.90) return fail("BAM below 90%: " + detail.str());
  if (md_mid > 0.50) return fail("Mahalanobis above 50%: " + detail.str());
  if (!witness) return fail("no non-convexity witness: " + detail.str());
  if (t >= 30.0) return fail("too slow: " + detail.str());
  return {true, detail.str() + "; non-convex midpoint witness found"};
}

Outcome cli_determinism() {
  const std::string bam = BAM_CLI_PATH;
  lb::testing::TempDir tmp("accept_cli");
  const auto dir = tmp.path().string();
  auto run = [](const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); };
  if (run("'" + bam + "' synth --out-dir '" + dir + "' --seed 42") != 0) return fail("bam synth failed");
  std::string first;
  for (const char* fmt_name : {"markdown", "csv", "json"}) {
    for (int k = 0; k < 2; ++k) {
      const auto out = dir + "/report_" + fmt_name + "_" + std::to_string(k);
      if (run("'" + bam + "' eval --config '" + dir + "/run.toml' --format " + fmt_name +
              " --out '" + out + "' --plot-data '" + out + ".plot'") != 0) {
        return fail(std::string("bam eval failed for ") + fmt_name);
      }
    }
    const auto a = lb::testing::read_file(dir + "/report_" + fmt_name + "_0");
    const auto b = lb::testing::read_file(dir + "/report_" + fmt_name + "_1");
    const auto pa = lb::testing::read_file(dir + "/report_" + fmt_name + "_0.plot");
    const auto pb = lb::testing::read_file(dir + "/report_" + fmt_name + "_1.plot");
    if (a.empty() || a != b || pa.empty() || pa != pb) {
      return fail(std::string(fmt_name) + " reports differ between runs");
    }
    if (first.empty()) first = a;
  }
  return {true, "markdown, csv, json and plot data byte-identical across two runs"};
}

/// Best-of-5 wall time for `queries` containment checks.
double time_contains(const lb::BamMonitor& monitor, const std::vector<Vector>& queries) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t sink = 0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto t0 = Clock::now();
    for (const auto& q : queries) sink += monitor.contains(q);
    best = std::min(best, seconds_since(t0));
  }
  if (sink == std::numeric_limits<std::size_t>::max()) std::puts("");
  return best;
}

lb::BamMonitor grid_monitor(std::size_t m, std::size_t d) {
  std::vector<lb::ClusterBox> boxes;
  for (std::size_t i = 0; i < m; ++i) {
    lb::ClusterBox b{Vector(d), Vector(d), Vector(d, 0.1)};
    for (std::size_t j = 0; j < d; ++j) {
      b.lower[j] = 10.0 * static_cast<double>(i);
      b.upper[j] = b.lower[j] + 1.0;
    }
    boxes.push_back(std::move(b));
  }
  return lb::BamMonitor(std::move(boxes), 0.5);
}

/// Queries that pass every dimension but the last of box 0, so no check
/// exits early and every box is scanned.
std::vector<Vector> worst_case_queries(std::size_t d, std::size_t count) {
  std::vector<Vector> qs(count, Vector(d, 0.5));
  for (std::size_t i = 0; i < count; ++i) qs[i][d - 1] = -5.0 - static_cast<double>(i % 7);
  return qs;
}

Outcome scaling() {
  const std::size_t queries = 20000;
  const std::size_t m0 = 8, d0 = 8;
  const double base = time_contains(grid_monitor(m0, d0), worst_case_queries(d0, queries));
  const double more_boxes = time_contains(grid_monitor(10 * m0, d0), worst_case_queries(d0, queries));
  const double more_dims = time_contains(grid_monitor(m0, 10 * d0), worst_case_queries(10 * d0, queries));
  const double rm = more_boxes / base, rd = more_dims / base;
  const std::string detail = fmt("10x m: time ratio %.1f", rm) + fmt(", 10x d: time ratio %.1f", rd) +
                             " (limit 20)";
  if (rm > 20.0 || rd > 20.0) return fail(detail);
  return {true, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"training containment", training_containment},
      {"score/containment equivalence", score_containment_equivalence},
      {"delta monotonicity", delta_monotonicity},
      {"calibration coverage", calibration_coverage},
      {"k-means oracle", kmeans_oracle},
      {"Mahalanobis sanity", mahalanobis_sanity},
      {"synthetic midgap (two clusters)", synthetic_midgap},
      {"eval determinism", cli_determinism},
      {"O(m*d) scaling", scaling},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out = fail(std::string("exception: ") + e.what());
    }
    std::printf("%s  %s: %s\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str());
    std::fflush(stdout);
    failures += !out.pass;
  }
  return failures == 0 ? 0 : 1;
}

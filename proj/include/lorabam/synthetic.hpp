#pragma once

// Two-cluster synthetic data with an out-of-distribution cloud centred on the
// midpoint between the clusters. A union of per-cluster boxes rejects the
// midpoint cloud; a single Gaussian fitted to both clusters accepts it.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "lorabam/error.hpp"
#include "lorabam/feature_store.hpp"
#include "lorabam/random.hpp"

namespace lorabam {

struct SynthConfig {
  std::size_t dim = 8;
  Vector center_a;
  Vector center_b;
  double cluster_std = 0.3;
  std::size_t n_per_cluster = 200;
  std::size_t n_ood_midgap = 200;
  std::uint64_t seed = 42;
  double calib_fraction = 0.2;

  /// Centers at the origin and at `separation` along the first axis.
  static SynthConfig two_clusters(std::size_t dim, double separation,
                                  double cluster_std, std::size_t n_per_cluster,
                                  std::size_t n_ood_midgap, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.dim = dim;
    cfg.center_a.assign(dim, 0.0);
    cfg.center_b.assign(dim, 0.0);
    if (dim > 0) cfg.center_b[0] = separation;
    cfg.cluster_std = cluster_std;
    cfg.n_per_cluster = n_per_cluster;
    cfg.n_ood_midgap = n_ood_midgap;
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    if (dim == 0) throw UsageError("synthetic dimension must be positive");
    if (center_a.size() != dim || center_b.size() != dim) {
      throw UsageError("synthetic centers must have the configured dimension");
    }
    if (center_a == center_b) throw UsageError("synthetic centers must differ");
    if (!(cluster_std > 0.0)) throw UsageError("cluster std must be positive");
    if (n_per_cluster < 1 || n_ood_midgap < 1) {
      throw UsageError("synthetic counts must be at least 1");
    }
  }
};

struct SynthData {
  Dataset id_train;
  Dataset id_calib;
  Dataset ood_midgap;
};

namespace detail {

inline std::string synth_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%05zu", prefix, i);
  return buf;
}

inline Vector gaussian_point(Rng& rng, const Vector& center, double std) {
  Vector v(center.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = center[j] + std * rng.normal();
  return v;
}

}  // namespace detail

inline SynthData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, SeedStream::synthetic));

  std::vector<FeatureVector> id;
  id.reserve(2 * cfg.n_per_cluster);
  for (std::size_t i = 0; i < cfg.n_per_cluster; ++i) {
    id.push_back({detail::synth_id("a", i),
                  detail::gaussian_point(rng, cfg.center_a, cfg.cluster_std),
                  {{"dataset", "synth_id"}, {"cluster", "a"}}});
  }
  for (std::size_t i = 0; i < cfg.n_per_cluster; ++i) {
    id.push_back({detail::synth_id("b", i),
                  detail::gaussian_point(rng, cfg.center_b, cfg.cluster_std),
                  {{"dataset", "synth_id"}, {"cluster", "b"}}});
  }

  Vector mid(cfg.dim);
  for (std::size_t j = 0; j < cfg.dim; ++j) {
    mid[j] = 0.5 * (cfg.center_a[j] + cfg.center_b[j]);
  }
  std::vector<FeatureVector> ood;
  ood.reserve(cfg.n_ood_midgap);
  for (std::size_t i = 0; i < cfg.n_ood_midgap; ++i) {
    ood.push_back({detail::synth_id("mid", i),
                   detail::gaussian_point(rng, mid, cfg.cluster_std),
                   {{"dataset", "synth_midgap"}}});
  }

  Dataset all("synth_id", Role::train, std::move(id), cfg.dim);
  auto [train, calib] = split_dataset(
      all, cfg.calib_fraction, derive_seed(cfg.seed, SeedStream::split));
  return {train.relabeled("synth_id_train", Role::train),
          calib.relabeled("synth_id_calib", Role::calibration),
          Dataset("synth_midgap", Role::test, std::move(ood), cfg.dim)};
}

}  // namespace lorabam

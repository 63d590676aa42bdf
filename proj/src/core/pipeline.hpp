#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/domain.hpp"
#include "core/simulate.hpp"

namespace stratpart {

// high-level runs backing the batch commands; every function returns a
// deterministic JSON document (no timestamps, stable key order) so identical
// inputs produce byte-identical artifacts

struct EstimateOptions {
  std::vector<std::string> estimators;  // empty selects every known estimator
  bool location_fe = true;              // participation design
  bool date_fe = true;
  bool belief_fe = false;               // belief-equation design
  std::vector<double> grid{-0.4, -0.2, 0.0, 0.2, 0.4};
  int bootstrap_reps = 0;               // 0 skips resampling, delta SEs only
  std::vector<std::string> cluster_keys{"location", "enroll_date", "treat_date"};
  std::uint64_t seed = 0;               // bootstrap seed
  std::optional<PlantedTruth> truth;    // enables recovery scoring
};

const std::vector<std::string>& known_estimators();

std::string run_estimate(const Dataset& ds, const EstimateOptions& opt);

// plot-ready margin curve (average structural function over a fine delta_b
// grid) with 95% normal bands; uses the joint CF-MLE when selected, otherwise
// the first selected participation estimator
std::string margins_curve_csv(const Dataset& ds, const EstimateOptions& opt);

struct TestBatteryOptions {
  double treat_prob = 2.0 / 3.0;
  int late_replications = 999;
  std::uint64_t seed = 1234;
  bool location_fe = true;
  bool date_fe = true;
};

std::string run_test_battery(const Dataset& ds, const TestBatteryOptions& opt);

struct ReproduceOptions {
  // keys: beta_cf_mle, ape_overall, ate_below, ate_above, margin_overall,
  // exogeneity_chi2; values replace the default tolerances
  std::map<std::string, double> tolerance_overrides;
  bool location_fe = true;
  bool date_fe = true;
};

struct ReproduceOutcome {
  std::string json;
  bool all_pass = false;
};

ReproduceOutcome run_reproduce(const Dataset& ds, const ReproduceOptions& opt);

struct SweepOptions {
  SimConfig config;  // per-seed runs override config.seed
  std::vector<std::uint64_t> seeds;
  bool location_fe = true;
  bool date_fe = true;
};

std::string run_sweep(const SweepOptions& opt);

}  // namespace stratpart

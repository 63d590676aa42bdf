#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/domain.hpp"

namespace stratpart {

struct LocationSpec {
  std::string name;
  double signal = 0.5;  // published first-survey intent share
  double share = 1.0;   // sampling weight of the location
};

struct DaySpec {
  std::string label;
  double weight = 1.0;
};

struct SimConfig {
  int n = 1510;
  std::vector<LocationSpec> locations;
  std::vector<DaySpec> enroll_days;
  std::vector<DaySpec> treat_days;
  double prior_shape_a = 1.0, prior_shape_b = 1.0;  // beta seed of pre-intervention beliefs
  double ref_shape_a = 1.0, ref_shape_b = 1.0;      // beta seed of reference beliefs
  double treat_prob = 2.0 / 3.0;
  PlantedTruth truth;
  std::string psi = "group_theta";  // update rule: group contrasts, or "linear_gap"
  double psi_slope = 0.5;           // slope of the linear-in-(signal - reference) rule
  std::uint64_t seed = 1;
};

void validate_config(const SimConfig& cfg);

struct GenResult {
  Dataset ds;
  PlantedTruth truth;
  int clipped = 0;  // post-intervention beliefs pushed back into [0,1]
  std::vector<std::string> warnings;
};

// Deterministic population draw: one counter-based stream, fixed per-record draw order
// (location, enrollment day, treatment day, prior belief, reference belief, assignment,
// belief shock, participation shock).
GenResult generate_population(const SimConfig& cfg);

// Calibration mirroring the 2019 four-city field experiment: location shares and
// signals, belief-seed shapes, assignment probability, and the planted belief/choice
// coefficients all come from the published tables.
SimConfig preset_paper2019();

struct EquilibriumResult {
  double b_star = 0.0;  // fixed point of b -> Phi(alpha + beta b)
  int iterations = 0;
  double residual = 0.0;
  bool unique = true;              // guaranteed for beta <= 0 (strictly decreasing map)
  std::vector<double> all_roots;   // every fixed point found (beta > 0 may have several)
};

EquilibriumResult solve_equilibrium(double alpha, double beta, double tol = 1e-12);

struct FreeRidingOffset {
  double naive_response = 0.0;        // probability response holding others' turnout fixed
  double equilibrium_response = 0.0;  // fixed-point shift after the alpha change
  double offset_share = 0.0;          // 1 - equilibrium/naive
};

FreeRidingOffset free_riding_offset(double alpha, double alpha_shift, double beta);

// structured-text round trips for configs and planted truth sidecars
std::string sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const std::string& text);
std::string truth_to_json(const PlantedTruth& truth);
PlantedTruth truth_from_json(const std::string& text);

}  // namespace stratpart

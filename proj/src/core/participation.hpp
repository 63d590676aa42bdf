#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/belief.hpp"
#include "core/domain.hpp"
#include "core/optim.hpp"

namespace stratpart {

enum class PEstimator { probit, cf_twostep, cf_joint_mle, newey_minchi2 };

std::string estimator_name(PEstimator e);

struct ParticipationSpec {
  bool location_fe = true;
  bool date_fe = true;
  bool use_covariates = true;
  bool belief_fe = false;  // fixed effects in the belief equation (stage 1 / joint system)
  double tol = 1e-8;
};

struct ParticipationFit {
  PEstimator estimator = PEstimator::probit;

  // reporting scale: [const, delta_b, gamma..., (cf_resid) | (stage-1 theta..., corr, sd)]
  Vec params;
  Mat covariance;
  std::vector<std::string> param_names;

  double alpha_hat = 0.0, beta_hat = 0.0;
  Vec gamma_hat;
  int k_gamma = 0;
  std::optional<double> eta_hat;      // cf_twostep: coefficient on the first-stage residual
  std::optional<double> rho_hat;      // cf_joint_mle: corr(e, u)
  std::optional<double> sigma_e_hat;  // cf_joint_mle: sd of the belief disturbance
  std::optional<double> loglik;
  bool converged = false;
  std::vector<std::string> notes;

  // kept for margins, APEs and diagnostics
  Mat X;    // [1, delta_b, gamma columns] (+ cf residual column for the two-step)
  Mat W;    // belief design (joint MLE only)
  Vec db;
  Vec a;
  Vec ehat;          // two-step only
  Vec theta_stage1;  // belief-equation coefficients where estimated
  // internal optimizer coordinates for the joint MLE (corr, sd unconstrained)
  Vec params_internal;
  Mat cov_internal;
  int i_atrho = -1, i_logsig = -1;

  double se(int j) const;
};

// participation-side design: [1, delta_b, location/date dummies, covariates]
Mat participation_design(const Dataset& ds, const ParticipationSpec& spec,
                         std::vector<std::string>& names);

ParticipationFit fit_probit(const Dataset& ds, const ParticipationSpec& spec = {});
ParticipationFit fit_cf_twostep(const Dataset& ds, const ParticipationSpec& spec = {});
ParticipationFit fit_cf_joint_mle(const Dataset& ds, const ParticipationSpec& spec = {});
ParticipationFit fit_newey_minchi2(const Dataset& ds, const ParticipationSpec& spec = {});

struct GridMargin {
  double at = 0.0;
  EstCell cell;
};

struct MarginTable {
  EstCell overall, at_means;
  std::vector<GridMargin> at_grid;
};

struct APETable {
  EstCell overall, at_means, at_pre, at_post;
};

// overall and at-means cells are conditional predictions (they include the
// control-function term, so the overall margin tracks the observed share);
// fixed delta_b cells are average-structural-function counterfactuals
MarginTable predictive_margins(const ParticipationFit& fit, const Dataset& ds,
                               const std::vector<double>& grid);

APETable ape(const ParticipationFit& fit, const Dataset& ds);

// point estimates only (no delta-method passes); used by bootstrap functionals
struct MarginValues {
  double overall = 0.0, at_means = 0.0;
  std::vector<double> at_grid;
};
struct ApeValues {
  double overall = 0.0, at_means = 0.0, at_pre = 0.0, at_post = 0.0;
};
MarginValues margin_estimates(const ParticipationFit& fit, const std::vector<double>& grid);
ApeValues ape_estimates(const ParticipationFit& fit);

struct DeltaResult {
  double estimate = 0.0, se = 0.0, p = 1.0;
  bool degenerate_gradient = false;
};

// se of a smooth functional of the reporting-scale parameter vector
DeltaResult delta_method(const ParticipationFit& fit,
                         const std::function<double(const Vec&)>& functional);

// full-information likelihood of the two-equation system, exposed for gradient
// checks and brute-force comparison; p = [psi(kd), theta(kw), atanh corr, log sd]
struct CfJointModel {
  Mat D;   // participation design including the delta_b column
  Mat W;   // belief design
  Vec db;
  Vec a;
  double loglik(const Vec& p) const;
  Vec grad(const Vec& p) const;
};

}  // namespace stratpart

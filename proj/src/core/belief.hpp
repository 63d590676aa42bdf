#pragma once

#include <string>
#include <vector>

#include "core/domain.hpp"
#include "core/optim.hpp"

namespace stratpart {

enum class BeliefLink { linear, fractional_probit, beta_probit };

struct BeliefOptions {
  bool location_fe = false;
  bool date_fe = false;
  bool sandwich = true;  // fractional probit: robust QMLE covariance (else observed info)
  double tol = 1e-8;
};

struct EstCell {
  double estimate = 0.0, se = 0.0, p = 1.0;
};

struct BeliefUpdateFit {
  BeliefLink link = BeliefLink::linear;
  Vec theta;                       // coefficients on (1, z, c, z*c, fe...)
  std::vector<std::string> names;
  Mat covariance;
  Vec residuals;                   // linear link only
  double scale_hat = 0.0;          // beta link precision (natural scale)
  double scale_se = 0.0;
  double loglik_or_rss = 0.0;
  double root_mse = 0.0;           // linear
  double resid_sd = 0.0;           // linear, 1/n convention
  bool converged = true;
  std::vector<std::string> warnings;
  Mat design;
  Vec response;                    // delta_b (linear) or (delta_b+1)/2 (transformed links)
};

struct GroupATE {
  EstCell below, above;
};

// design on (1, z, c, z*c) plus optional fixed-effect dummies
Mat belief_design(const Dataset& ds, const BeliefOptions& opts, std::vector<std::string>& names);

// throws EstimationError naming the constant or collinear regressor
void check_design_rank(const Mat& X, const std::vector<std::string>& names);

BeliefUpdateFit fit_ols_belief(const Dataset& ds, const BeliefOptions& opts = {});
BeliefUpdateFit fit_fractional_probit(const Dataset& ds, const BeliefOptions& opts = {});
BeliefUpdateFit fit_beta_regression(const Dataset& ds, const BeliefOptions& opts = {});

// below = L(t0+t1) - L(t0); above = L(t0+t1+t2+t3) - L(t0+t2); transformed links are
// retransformed to the delta_b scale (factor 2 from y = (delta_b+1)/2)
GroupATE ate_by_group(const BeliefUpdateFit& fit);

struct ResidualOut {
  Vec e_hat;
  double sd = 0.0;  // 1/n convention, matching the joint-MLE sigma
};
ResidualOut residuals(const BeliefUpdateFit& fit, const Dataset& ds);

// quasi-likelihood objects exposed for gradient checking and reuse by the probit fits
struct FracProbitModel {
  Mat X;
  Vec y;  // in [0,1]
  double loglik(const Vec& theta) const;
  Vec grad(const Vec& theta) const;
  Mat hess(const Vec& theta) const;
  Mat score_outer(const Vec& theta) const;  // sum of per-record score outer products
};

struct BetaRegModel {
  Mat X;
  Vec y;  // strictly inside (0,1); parameters: (theta, zeta=log scale)
  double loglik(const Vec& p) const;
  Vec grad(const Vec& p) const;
};

}  // namespace stratpart

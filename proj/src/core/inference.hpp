#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/domain.hpp"
#include "core/participation.hpp"

namespace stratpart {

struct TestResult {
  double statistic = 0.0;
  std::optional<int> df;
  double p_value = 1.0;
  std::string method;
  std::string notes;
};

// W = (R theta - r)' (R Sigma R')^-1 (R theta - r), chi2 with df = #restrictions.
// A single restriction is reported through the exact z identity sqrt(W) = estimate/se.
TestResult wald_test(const Vec& estimate, const Mat& covariance, const Mat& restriction,
                     const Vec& target);

// Wald test of zero error correlation in a joint control-function MLE fit,
// carried out on the atanh scale where the sampling distribution is closer to normal.
TestResult exogeneity_test(const ParticipationFit& joint_fit);

struct BootstrapSpec {
  int replications = 1000;
  std::vector<std::string> cluster_keys;  // empty: resample single records
  std::uint64_t seed = 0;
  bool drop_failed = true;
};

struct BootstrapResult {
  std::vector<double> se;  // one per functional coordinate
  Mat draws;               // completed replications x coordinates
  int requested = 0;
  int completed = 0;
  int failed = 0;
  int populated_clusters = 0;  // distinct key crossings present in the data
  int feasible_clusters = 0;   // product of per-key distinct value counts
  std::vector<std::string> notes;
};

// Resamples records (or whole clusters when cluster_keys are given) with replacement,
// re-evaluates the functional per replication, and reports the across-replication
// standard deviation. Replication r always consumes stream (seed, r), so results do
// not depend on evaluation order.
BootstrapResult bootstrap(const Dataset& ds, const std::function<Vec(const Dataset&)>& functional,
                          const BootstrapSpec& spec);

// Two-sample Kolmogorov-Smirnov test. Exact p by lattice-path counting when
// min(n, m) <= 10 and the pooled sample is tie-free; asymptotic otherwise.
TestResult ks_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// One-sample Kolmogorov-Smirnov test against a reference CDF (asymptotic p).
TestResult ks_test(const std::vector<double>& sample,
                   const std::function<double(double)>& reference_cdf);

// Equality-of-populations rank test with the ties correction; chi2 with k-1 df.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Exact two-sided binomial test of successes/trials against p0, summing the
// probabilities of all outcomes no more likely than the observed one.
TestResult binomial_test(long long successes, long long trials, double p0);

// Pooled two-sample z-test of equal proportions.
TestResult two_proportion_test(long long successes_1, long long trials_1, long long successes_2,
                               long long trials_2);

struct BetaFit {
  double shape_a = 0.0;
  double shape_b = 0.0;
  double se_a = 0.0;
  double se_b = 0.0;
  double loglik = 0.0;
  TestResult ks_against_fit;  // one-sample KS of the (adjusted) sample vs the fitted CDF
  std::vector<std::string> notes;
};

// Maximum-likelihood fit of a two-parameter beta distribution; boundary values are
// shrunk inward by (y*(n-1)+.5)/n before fitting (noted when it happens).
BetaFit beta_mle(const std::vector<double>& sample);

struct LateValidityOptions {
  int replications = 999;
  std::uint64_t seed = 1234;
};

// Tests the instrument-validity + monotonicity implications within one reference-belief
// group ("below" or "above"). The endogenous variable is binarized as
// d = 1{delta_b moves in the stimulus direction}: up when the reference belief sits
// below the revealed signal, down when it sits above. The statistic is the largest
// studentized violation of the four implied conditional moment inequalities; its
// critical value comes from a recentered within-arm bootstrap (a bootstrap-max
// approximation to the intersection-bounds test, not the full series machinery).
TestResult late_validity_test(const Dataset& ds, const std::string& group,
                              const LateValidityOptions& opt = {});

}  // namespace stratpart

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "core/belief.hpp"
#include "core/domain.hpp"
#include "core/rng.hpp"
#include "core/special.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace stratpart;

namespace {

// One location with signal 0.5; condition is planted through b_ref.
Dataset make_ds(const std::vector<int>& z, const std::vector<int>& c,
                const std::vector<double>& db) {
  std::vector<SubjectRecord> recs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto& r = recs[i];
    r.subject_id = "s" + std::to_string(1000 + i);
    r.location = "konstanz";
    r.enroll_date = "2019-08-29";
    r.treat_date = "2019-09-14";
    r.b_ref = c[i] ? 0.8 : 0.2;
    r.b_prior = 0.5 - db[i] / 2.0;
    r.b_post = 0.5 + db[i] / 2.0;
    r.z = z[i];
    r.a = 0;
  }
  return Dataset(std::move(recs), {{"konstanz", 0.5}});
}

struct Planted {
  Dataset ds;
  std::array<double, 4> theta;
  double sigma;
};

Planted planted_panel(std::uint64_t seed, int n) {
  std::array<double, 4> theta{0.0071, 0.0425, -0.0003, -0.0979};
  double sigma = 0.1375;
  RandomStream rng(seed, 0);
  std::vector<int> z(n), c(n);
  std::vector<double> db(n);
  for (int i = 0; i < n; ++i) {
    z[i] = rng.next_bernoulli(2.0 / 3.0);
    c[i] = rng.next_bernoulli(0.45);
    double mean = theta[0] + theta[1] * z[i] + theta[2] * c[i] + theta[3] * z[i] * c[i];
    double v = mean + sigma * rng.next_normal();
    while (std::abs(v) > 0.9) v = mean + sigma * rng.next_normal();
    db[i] = v;
  }
  return {make_ds(z, c, db), theta, sigma};
}

double cell_mean(const Dataset& ds, int z, int c) {
  double sum = 0.0;
  int cnt = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.rec(i).z == z && ds.condition(i) == c) {
      sum += ds.delta_b(i);
      ++cnt;
    }
  }
  return sum / cnt;
}

}  // namespace

TEST_CASE("ols recovers planted coefficients on a generated panel") {
  auto [ds, theta, sigma] = planted_panel(20240817, 1600);
  auto fit = fit_ols_belief(ds, {});

  REQUIRE(fit.theta.size() == 4);
  for (int j = 0; j < 4; ++j) {
    double se = std::sqrt(fit.covariance(j, j));
    CHECK(std::abs(fit.theta[j] - theta[j]) < 3.5 * se);
  }
  // [DERIVED] noise sd 0.1375 was planted; k/n correction is negligible at n=1600
  CHECK(fit.root_mse == doctest::Approx(sigma).epsilon(0.05));
  CHECK(fit.resid_sd < fit.root_mse);

  // normal equations: residuals orthogonal to every design column
  Vec xte = fit.design.transpose() * fit.residuals;
  CHECK(xte.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(fit.residuals.mean()) < 1e-10);

  auto res = residuals(fit, ds);
  CHECK((res.e_hat - fit.residuals).cwiseAbs().maxCoeff() == 0.0);
  CHECK(res.sd == doctest::Approx(fit.resid_sd).epsilon(1e-12));
}

TEST_CASE("ols equals the closed-form cell-mean contrasts when saturated") {
  // 3 rows per (z,c) cell; the interacted design is saturated, so the OLS
  // solution is exactly the cell means: t0=m00, t1=m10-m00, t2=m01-m00,
  // t3=m11-m10-m01+m00  [DERIVED]
  std::vector<int> z, c;
  std::vector<double> db;
  double vals[4][3] = {{0.01, -0.02, 0.04}, {0.05, 0.09, 0.02}, {-0.01, 0.00, 0.03}, {-0.06, -0.02, -0.07}};
  int cell = 0;
  for (int zz : {0, 1})
    for (int cc : {0, 1}) {
      for (int r = 0; r < 3; ++r) {
        z.push_back(zz);
        c.push_back(cc);
        db.push_back(vals[cell][r]);
      }
      ++cell;
    }
  auto ds = make_ds(z, c, db);
  auto fit = fit_ols_belief(ds, {});

  double m00 = cell_mean(ds, 0, 0), m10 = cell_mean(ds, 1, 0);
  double m01 = cell_mean(ds, 0, 1), m11 = cell_mean(ds, 1, 1);
  CHECK(fit.theta[0] == doctest::Approx(m00).epsilon(1e-12));
  CHECK(fit.theta[1] == doctest::Approx(m10 - m00).epsilon(1e-12));
  CHECK(fit.theta[2] == doctest::Approx(m01 - m00).epsilon(1e-12));
  CHECK(fit.theta[3] == doctest::Approx(m11 - m10 - m01 + m00).epsilon(1e-12));

  auto ate = ate_by_group(fit);
  CHECK(ate.below.estimate == doctest::Approx(fit.theta[1]).epsilon(1e-14));
  CHECK(ate.above.estimate == doctest::Approx(fit.theta[1] + fit.theta[3]).epsilon(1e-14));
  CHECK(ate.below.se == doctest::Approx(std::sqrt(fit.covariance(1, 1))).epsilon(1e-12));
  double v_above = fit.covariance(1, 1) + fit.covariance(3, 3) + 2.0 * fit.covariance(1, 3);
  CHECK(ate.above.se == doctest::Approx(std::sqrt(v_above)).epsilon(1e-12));
}

TEST_CASE("zero updates give zero coefficients across links") {
  std::vector<int> z, c;
  std::vector<double> db;
  for (int i = 0; i < 24; ++i) {
    z.push_back(i % 2);
    c.push_back((i / 2) % 2);
    db.push_back(0.0);
  }
  auto ds = make_ds(z, c, db);

  auto ols = fit_ols_belief(ds, {});
  CHECK(ols.theta.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(ols.root_mse == 0.0);

  auto frac = fit_fractional_probit(ds, {});
  CHECK(frac.theta.cwiseAbs().maxCoeff() < 1e-10);

  auto beta = fit_beta_regression(ds, {});
  CHECK(beta.theta[0] == 0.0);
  REQUIRE(!beta.warnings.empty());
  CHECK(beta.warnings.back().find("degenerate scale") != std::string::npos);
}

TEST_CASE("saturated fractional probit reproduces observed cell frequencies") {
  RandomStream rng(77, 3);
  std::vector<int> z, c;
  std::vector<double> db;
  for (int i = 0; i < 40; ++i) {
    z.push_back(i % 2);
    c.push_back((i / 2) % 2);
    db.push_back(1.2 * (rng.next_uniform() - 0.5));
  }
  auto ds = make_ds(z, c, db);
  auto fit = fit_fractional_probit(ds, {});
  REQUIRE(fit.converged);

  // [DERIVED] with a saturated design the QMLE first-order conditions force the
  // fitted mean in each cell to equal the observed mean of y = (db+1)/2
  for (int zz : {0, 1})
    for (int cc : {0, 1}) {
      double eta = fit.theta[0] + fit.theta[1] * zz + fit.theta[2] * cc + fit.theta[3] * zz * cc;
      double want = 0.5 * (cell_mean(ds, zz, cc) + 1.0);
      CHECK(std_normal_cdf(eta) == doctest::Approx(want).epsilon(1e-8));
    }

  // so the retransformed group effects reduce to differences of db cell means
  auto ate = ate_by_group(fit);
  double m00 = cell_mean(ds, 0, 0), m10 = cell_mean(ds, 1, 0);
  double m01 = cell_mean(ds, 0, 1), m11 = cell_mean(ds, 1, 1);
  CHECK(ate.below.estimate == doctest::Approx(m10 - m00).epsilon(1e-6));
  CHECK(ate.above.estimate == doctest::Approx(m11 - m01).epsilon(1e-6));

  // sandwich and model-based covariances both exist; sandwich is the default
  BeliefOptions plain;
  plain.sandwich = false;
  auto fit2 = fit_fractional_probit(ds, plain);
  for (int j = 0; j < 4; ++j) {
    CHECK(fit.covariance(j, j) > 0.0);
    CHECK(fit2.covariance(j, j) > 0.0);
  }
  CHECK((fit.covariance - fit2.covariance).cwiseAbs().maxCoeff() > 1e-12);
}

TEST_CASE("beta regression recovers a planted precision") {
  // y ~ Beta(mean .5, precision 3.874), independent of (z,c); b_prior = 1-y and
  // b_post = y keep beliefs in range while making (db+1)/2 = y exactly
  RandomStream rng(991, 5);
  const int n = 1500;
  const double scale = 3.874;
  std::vector<SubjectRecord> recs(n);
  for (int i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.subject_id = "s" + std::to_string(1000 + i);
    r.location = "konstanz";
    r.enroll_date = "2019-08-29";
    r.treat_date = "2019-09-14";
    r.z = rng.next_bernoulli(2.0 / 3.0);
    r.b_ref = rng.next_bernoulli(0.45) ? 0.8 : 0.2;
    double y = rng.next_beta(0.5 * scale, 0.5 * scale);
    r.b_prior = 1.0 - y;
    r.b_post = y;
  }
  Dataset ds(std::move(recs), {{"konstanz", 0.5}});

  auto fit = fit_beta_regression(ds, {});
  REQUIRE(fit.converged);
  CHECK(fit.scale_hat == doctest::Approx(scale).epsilon(0.10));
  CHECK(fit.scale_se > 0.0);
  CHECK(std::abs(fit.scale_hat - scale) < 3.5 * fit.scale_se);
  // the response does not depend on (z,c): coefficients near zero
  CHECK(fit.theta.cwiseAbs().maxCoeff() < 0.12);
}

TEST_CASE("planted interaction flips the group effect sign across links") {
  auto [ds, theta, sigma] = planted_panel(550, 1600);
  (void)theta;
  (void)sigma;
  auto ols = ate_by_group(fit_ols_belief(ds, {}));
  auto frac = ate_by_group(fit_fractional_probit(ds, {}));
  auto beta = ate_by_group(fit_beta_regression(ds, {}));

  for (const auto* g : {&ols, &frac, &beta}) {
    CHECK(g->below.estimate > 0.0);
    CHECK(g->below.p < 0.05);
    CHECK(g->above.estimate < 0.0);
    CHECK(g->above.p < 0.05);
  }
  // links agree on the retransformed scale
  CHECK(std::abs(ols.below.estimate - frac.below.estimate) < 0.02);
  CHECK(std::abs(ols.above.estimate - frac.above.estimate) < 0.02);
  CHECK(std::abs(ols.below.estimate - beta.below.estimate) < 0.02);
  CHECK(std::abs(ols.above.estimate - beta.above.estimate) < 0.02);
}

TEST_CASE("rank-deficient designs are rejected naming the regressor") {
  std::vector<int> z(12, 1), c;
  std::vector<double> db;
  for (int i = 0; i < 12; ++i) {
    c.push_back(i % 2);
    db.push_back(0.01 * i - 0.05);
  }
  auto all_treated = make_ds(z, c, db);
  CHECK_THROWS_WITH_AS(fit_ols_belief(all_treated, {}), doctest::Contains("'z'"),
                       EstimationError);

  std::vector<int> z2, c2(12, 0);
  for (int i = 0; i < 12; ++i) z2.push_back(i % 2);
  auto all_below = make_ds(z2, c2, db);
  CHECK_THROWS_WITH_AS(fit_fractional_probit(all_below, {}), doctest::Contains("'c'"),
                       EstimationError);

  auto tiny = make_ds({0, 1, 0}, {0, 0, 1}, {0.1, 0.2, 0.0});
  CHECK_THROWS_AS(fit_ols_belief(tiny, {}), EstimationError);
}

TEST_CASE("fixed effects use the largest cell as reference") {
  RandomStream rng(12, 9);
  std::vector<SubjectRecord> recs;
  auto add = [&](const std::string& loc, int cnt) {
    for (int i = 0; i < cnt; ++i) {
      SubjectRecord r;
      r.subject_id = loc + std::to_string(i);
      r.location = loc;
      r.enroll_date = (i % 2) ? "d1" : "d2";
      r.treat_date = (i % 3) ? "t1" : "t2";
      double db = 0.4 * (rng.next_uniform() - 0.5);
      r.b_prior = 0.5 - db / 2;
      r.b_post = 0.5 + db / 2;
      r.b_ref = (i % 4 < 2) ? 0.8 : 0.2;
      r.z = rng.next_bernoulli(0.5);
      recs.push_back(r);
    }
  };
  add("aa", 6);
  add("bb", 10);
  add("cc", 8);
  Dataset ds(std::move(recs), {{"aa", 0.5}, {"bb", 0.5}, {"cc", 0.5}});

  BeliefOptions opts;
  opts.location_fe = true;
  opts.date_fe = true;
  std::vector<std::string> names;
  Mat X = belief_design(ds, opts, names);

  // 4 base + 2 location dummies (bb is reference) + 1 enroll + 1 treat
  REQUIRE(X.cols() == 8);
  CHECK(std::find(names.begin(), names.end(), "loc_aa") != names.end());
  CHECK(std::find(names.begin(), names.end(), "loc_cc") != names.end());
  CHECK(std::find(names.begin(), names.end(), "loc_bb") == names.end());
  // dummy columns sum to their cell counts
  auto col = [&](const std::string& nm) {
    return static_cast<int>(std::find(names.begin(), names.end(), nm) - names.begin());
  };
  CHECK(X.col(col("loc_aa")).sum() == doctest::Approx(6.0));
  CHECK(X.col(col("loc_cc")).sum() == doctest::Approx(8.0));

  auto fit = fit_ols_belief(ds, opts);
  CHECK(fit.theta.size() == 8);
  Vec xte = fit.design.transpose() * fit.residuals;
  CHECK(xte.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("analytic quasi-likelihood derivatives match finite differences") {
  RandomStream rng(31, 1);
  const int n = 9, k = 4;
  Mat X(n, k);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i % 2;
    X(i, 2) = (i / 2) % 2;
    X(i, 3) = X(i, 1) * X(i, 2);
    y[i] = 0.1 + 0.8 * rng.next_uniform();
  }
  Vec th(k);
  th << 0.2, -0.4, 0.3, 0.1;

  FracProbitModel fm{X, y};
  Vec gf = finite_diff_grad([&](const Vec& v) { return fm.loglik(v); }, th);
  CHECK((fm.grad(th) - gf).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + gf.cwiseAbs().maxCoeff()));
  Mat hf = finite_diff_hessian_of_grad([&](const Vec& v) { return fm.grad(v); }, th);
  CHECK((fm.hess(th) - hf).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + hf.cwiseAbs().maxCoeff()));

  BetaRegModel bm{X, y};
  Vec p(k + 1);
  p << 0.2, -0.4, 0.3, 0.1, std::log(3.0);
  Vec gb = finite_diff_grad([&](const Vec& v) { return bm.loglik(v); }, p);
  CHECK((bm.grad(p) - gb).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + gb.cwiseAbs().maxCoeff()));
}

TEST_CASE("boundary updates are shrunk inward with a warning") {
  std::vector<int> z, c;
  std::vector<double> db;
  RandomStream rng(8, 8);
  for (int i = 0; i < 30; ++i) {
    z.push_back(i % 2);
    c.push_back((i / 2) % 2);
    db.push_back(0.8 * (rng.next_uniform() - 0.5));
  }
  db[0] = 1.0;    // b_prior 0 -> b_post 1, so y = 1 exactly
  db[1] = -1.0;   // y = 0 exactly
  auto ds = make_ds(z, c, db);

  auto fit = fit_beta_regression(ds, {});
  REQUIRE(fit.converged);
  REQUIRE(!fit.warnings.empty());
  CHECK(fit.warnings.front().find("boundary") != std::string::npos);
  CHECK(fit.response.maxCoeff() < 1.0);
  CHECK(fit.response.minCoeff() > 0.0);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "core/optim.hpp"
#include "core/rng.hpp"
#include "core/special.hpp"
#include "oracles.hpp"

using namespace stratpart;

TEST_CASE("normal cdf against erf-series oracle") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::fabs(std_normal_cdf(1.959964) - 0.975) < 1e-6);
  for (double x = -5.0; x <= 5.0; x += 0.173) {
    CHECK(std::fabs(std_normal_cdf(x) - oracle::phi_cdf(x)) < 1e-12);
    CHECK(std::fabs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) < 1e-12);
  }
  // nondecreasing on a grid
  double prev = 0.0;
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    double p = std_normal_cdf(x);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("normal pdf closed form and quadrature mass") {
  CHECK(std_normal_pdf(0.0) == doctest::Approx(0.3989423).epsilon(1e-6));
  CHECK(std_normal_pdf(1.3) == doctest::Approx(std_normal_pdf(-1.3)).epsilon(1e-15));
  double mass = oracle::simpson([](double t) { return std_normal_pdf(t); }, -8.0, 8.0, 4000);
  CHECK(std::fabs(mass - 1.0) < 1e-8);
  // dPhi/dx == phi by finite differences
  for (double x : {-2.2, -0.7, 0.0, 1.1, 3.0}) {
    double h = 1e-5;
    double fd = (std_normal_cdf(x + h) - std_normal_cdf(x - h)) / (2 * h);
    CHECK(std::fabs(fd - std_normal_pdf(x)) / std_normal_pdf(x) < 1e-6);
  }
}

TEST_CASE("normal quantile round trip and tail stability") {
  CHECK(std::fabs(std_normal_quantile(0.975) - 1.959964) < 1e-6);
  for (double p : {1e-10, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.9999, 1 - 1e-12}) {
    CHECK(std::fabs(std_normal_cdf(std_normal_quantile(p)) - p) < 1e-12 + 1e-9 * p);
  }
  CHECK_THROWS(std_normal_quantile(0.0));
  CHECK_THROWS(std_normal_quantile(1.0));
}

TEST_CASE("log normal cdf and inverse Mills deep tail") {
  for (double x : {-40.0, -25.0, -12.0, -5.0, -1.0, 0.0, 2.0, 8.0}) {
    double lp = log_std_normal_cdf(x);
    CHECK(std::isfinite(lp));
    if (x > -8) CHECK(std::fabs(std::exp(lp) - std_normal_cdf(x)) < 1e-14);
  }
  // inverse Mills ~ -x for x -> -inf, and matches direct ratio in the bulk
  for (double x : {-3.0, -1.0, 0.0, 1.5, 4.0}) {
    CHECK(std::fabs(inv_mills(x) - std_normal_pdf(x) / std_normal_cdf(x)) < 1e-12);
  }
  CHECK(inv_mills(-50.0) == doctest::Approx(50.0 + 1.0 / 50.0).epsilon(1e-3));
}

TEST_CASE("digamma and trigamma against series identities") {
  // psi(1) = -euler_gamma, psi(1/2) = -gamma - 2 ln 2
  const double euler = 0.57721566490153286061;
  CHECK(std::fabs(digamma(1.0) + euler) < 1e-12);
  CHECK(std::fabs(digamma(0.5) + euler + 2 * std::log(2.0)) < 1e-12);
  // recurrence psi(x+1) = psi(x) + 1/x
  for (double x : {0.3, 1.7, 4.9, 11.2}) {
    CHECK(std::fabs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-12);
    CHECK(std::fabs(trigamma(x + 1.0) - trigamma(x) + 1.0 / (x * x)) < 1e-12);
  }
  // trigamma(1) = pi^2/6
  CHECK(std::fabs(trigamma(1.0) - M_PI * M_PI / 6.0) < 1e-12);
  // trigamma is the derivative of digamma
  for (double x : {0.8, 2.5, 7.0}) {
    double h = 1e-6;
    double fd = (digamma(x + h) - digamma(x - h)) / (2 * h);
    CHECK(std::fabs(fd - trigamma(x)) / trigamma(x) < 1e-7);
  }
}

TEST_CASE("chi-square tail against closed-form oracles") {
  CHECK(std::fabs(chi2_sf(3.841458820694124, 1) - 0.05) < 1e-12);
  for (double x : {0.4, 1.0, 3.0, 9.0, 25.0}) {
    CHECK(std::fabs(chi2_sf(x, 1) - (1.0 - oracle::chi2_cdf_df1(x))) < 1e-12);
    CHECK(std::fabs(chi2_sf(x, 12) - (1.0 - oracle::chi2_cdf_even_df(x, 12))) < 1e-12);
    CHECK(std::fabs(chi2_sf(x, 2) - std::exp(-0.5 * x)) < 1e-13);
  }
}

TEST_CASE("incomplete beta against quadrature and closed forms") {
  // integrable shapes: compare to Simpson quadrature of the density
  for (double a : {1.0, 2.3, 4.0}) {
    for (double b : {1.5, 3.1}) {
      for (double x : {0.12, 0.5, 0.87}) {
        double norm = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b));
        double quad = oracle::simpson(
            [&](double t) { return norm * std::pow(t, a - 1) * std::pow(1 - t, b - 1); },
            0.0, x, 20000);
        CHECK(std::fabs(beta_cdf(x, a, b) - quad) < 5e-8);
      }
    }
  }
  // shapes < 1 via the arcsine law: I_x(1/2,1/2) = (2/pi) asin(sqrt(x))
  for (double x : {0.1, 0.33, 0.5, 0.9}) {
    CHECK(std::fabs(beta_cdf(x, 0.5, 0.5) - (2.0 / M_PI) * std::asin(std::sqrt(x))) < 1e-12);
  }
  // uniform case and symmetry identity
  CHECK(beta_cdf(0.37, 1, 1) == doctest::Approx(0.37).epsilon(1e-12));
  for (double x : {0.2, 0.6}) {
    CHECK(std::fabs(beta_cdf(x, 0.9805, 2.8988) - (1.0 - beta_cdf(1.0 - x, 2.8988, 0.9805))) < 1e-12);
  }
  CHECK(beta_cdf(0.0, 2, 2) == 0.0);
  CHECK(beta_cdf(1.0, 2, 2) == 1.0);
}

TEST_CASE("finite difference gradient basics") {
  // linear map recovered exactly
  Vec c(3);
  c << 1.5, -2.0, 0.25;
  auto f = [&](const Vec& v) { return c.dot(v); };
  Vec x = Vec::Zero(3);
  Vec g = finite_diff_grad(f, x);
  for (int j = 0; j < 3; ++j) CHECK(std::fabs(g[j] - c[j]) < 1e-9);

  // step halving reduces error ~quadratically on a cubic
  auto cube = [](const Vec& v) { return v[0] * v[0] * v[0]; };
  Vec p(1);
  p << 1.0;
  double e1 = std::fabs(finite_diff_grad(cube, p, 1e-2)[0] - 3.0);
  double e2 = std::fabs(finite_diff_grad(cube, p, 5e-3)[0] - 3.0);
  CHECK(e2 < e1 / 3.0);
}

TEST_CASE("maximizer on a concave quadratic") {
  Objective obj;
  obj.value = [](const Vec& v) { return -(v[0] - 3.0) * (v[0] - 3.0); };
  Vec init(1);
  init << -7.0;
  auto res = maximize_loglik(obj, init);
  REQUIRE(res.converged);
  CHECK(std::fabs(res.argmax[0] - 3.0) < 1e-7);
  CHECK(res.covariance_ok);
  CHECK(res.covariance(0, 0) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(res.gradient_norm <= 1e-8);
}

TEST_CASE("maximizer matches grid search on a 6-row probit") {
  // tiny binary problem, loglik written against the oracle cdf
  const double xs[6] = {-1.0, -0.4, 0.1, 0.5, 1.2, 2.0};
  const int ys[6] = {0, 0, 1, 0, 1, 1};
  auto loglik = [&](double b0, double b1) {
    double ll = 0.0;
    for (int i = 0; i < 6; ++i) {
      double p = oracle::phi_cdf(b0 + b1 * xs[i]);
      p = std::min(std::max(p, 1e-12), 1 - 1e-12);
      ll += ys[i] ? std::log(p) : std::log(1 - p);
    }
    return ll;
  };
  Objective obj;
  obj.value = [&](const Vec& v) { return loglik(v[0], v[1]); };
  auto res = maximize_loglik(obj, Vec::Zero(2));
  REQUIRE(res.converged);
  auto best = oracle::grid_search(
      [&](const std::vector<double>& v) { return loglik(v[0], v[1]); },
      {-4.0, -4.0}, {4.0, 4.0}, 33, 8, 1e-3);
  CHECK(std::fabs(res.argmax[0] - best[0]) < 1e-3);
  CHECK(std::fabs(res.argmax[1] - best[1]) < 1e-3);
}

TEST_CASE("maximizer reports separation instead of converging") {
  // perfectly separated: y = 1{x > 0}
  const double xs[6] = {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
  const int ys[6] = {0, 0, 0, 1, 1, 1};
  Objective obj;
  obj.value = [&](const Vec& v) {
    double ll = 0.0;
    for (int i = 0; i < 6; ++i) {
      double m = v[0] + v[1] * xs[i];
      ll += ys[i] ? log_std_normal_cdf(m) : log_std_normal_cdf(-m);
    }
    return ll;
  };
  auto res = maximize_loglik(obj, Vec::Zero(2), {1e-8, 2000, 1e4});
  CHECK_FALSE(res.converged);
  CHECK_FALSE(res.message.empty());
}

TEST_CASE("maximizer is bitwise deterministic") {
  Objective obj;
  obj.value = [](const Vec& v) {
    return -(v[0] - 1.0) * (v[0] - 1.0) - 0.5 * v[1] * v[1] - 0.3 * std::sin(v[0] * v[1]);
  };
  Vec init(2);
  init << 0.2, -0.4;
  auto r1 = maximize_loglik(obj, init);
  auto r2 = maximize_loglik(obj, init);
  REQUIRE(r1.converged);
  REQUIRE(r2.converged);
  CHECK(std::memcmp(r1.argmax.data(), r2.argmax.data(), sizeof(double) * 2) == 0);
  CHECK(std::memcmp(&r1.loglik, &r2.loglik, sizeof(double)) == 0);
  CHECK(r1.iterations == r2.iterations);
}

TEST_CASE("random stream reproducibility and stream separation") {
  RandomStream s1(42, 7), s2(42, 7), s3(42, 8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 256; ++i) {
    auto a = s1.next_u64(), b = s2.next_u64(), c = s3.next_u64();
    all_equal = all_equal && (a == b);
    any_diff = any_diff || (a != c);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("random stream marginals") {
  RandomStream s(2024, 0);
  const int n = 40000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double u = s.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.01);
  CHECK(std::fabs(sum2 / n - 1.0 / 3.0) < 0.01);

  double zsum = 0, zsum2 = 0;
  for (int i = 0; i < n; ++i) {
    double z = s.next_normal();
    zsum += z;
    zsum2 += z * z;
  }
  CHECK(std::fabs(zsum / n) < 0.02);
  CHECK(std::fabs(zsum2 / n - 1.0) < 0.03);

  // beta(2,5) mean 2/7, var 10/392
  double bsum = 0, bsum2 = 0;
  for (int i = 0; i < n; ++i) {
    double b = s.next_beta(2.0, 5.0);
    bsum += b;
    bsum2 += b * b;
  }
  double bm = bsum / n, bv = bsum2 / n - bm * bm;
  CHECK(std::fabs(bm - 2.0 / 7.0) < 0.01);
  CHECK(std::fabs(bv - 10.0 / 392.0) < 0.005);

  int ones = 0;
  for (int i = 0; i < n; ++i) ones += s.next_bernoulli(2.0 / 3.0);
  CHECK(std::fabs((double)ones / n - 2.0 / 3.0) < 0.02);

  double w[3] = {0.5, 0.3, 0.2};
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) ++counts[s.next_categorical(w, 3)];
  for (int k = 0; k < 3; ++k) CHECK(std::fabs((double)counts[k] / n - w[k]) < 0.02);
}

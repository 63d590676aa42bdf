#include "core/belief.hpp"

#include <cmath>

#include "core/special.hpp"

namespace stratpart {

namespace {

// first derivative of the probit quasi-score weight u(eta) = y*m+ - (1-y)*m-
// with m+ = phi/Phi at eta and m- = phi/(1-Phi); valid for fractional y as well
double probit_u(double eta, double y) {
  return y * inv_mills(eta) - (1.0 - y) * inv_mills(-eta);
}

double probit_uprime(double eta, double y) {
  double mp = inv_mills(eta), mm = inv_mills(-eta);
  return y * (-eta * mp - mp * mp) - (1.0 - y) * (-eta * mm + mm * mm);
}

void append_fe(const Dataset& ds, bool location_fe, bool date_fe, Mat& X,
               std::vector<std::string>& names) {
  auto add_factor = [&](auto getter, const std::string& prefix) {
    std::vector<std::string> vals(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) vals[i] = getter(ds.rec(i));
    auto enc = encode_factor(vals, {}, prefix);
    if (enc.labels.empty()) return;
    Mat D = Mat::Zero(X.rows(), static_cast<int>(enc.labels.size()));
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (enc.column_of_record[i] >= 0) D(static_cast<int>(i), enc.column_of_record[i]) = 1.0;
    Mat XD(X.rows(), X.cols() + D.cols());
    XD << X, D;
    X = std::move(XD);
    names.insert(names.end(), enc.labels.begin(), enc.labels.end());
  };
  if (location_fe) add_factor([](const SubjectRecord& r) { return r.location; }, "loc");
  if (date_fe) {
    add_factor([](const SubjectRecord& r) { return r.enroll_date; }, "enroll");
    add_factor([](const SubjectRecord& r) { return r.treat_date; }, "treat");
  }
}

Vec transformed_response(const Dataset& ds) {
  Vec y(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) y[static_cast<int>(i)] = 0.5 * (ds.delta_b(i) + 1.0);
  return y;
}

}  // namespace

void check_design_rank(const Mat& X, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Mat> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() == X.cols()) return;
  // name the degenerate column: the first one the pivoting pushed past the rank
  auto perm = qr.colsPermutation().indices();
  std::string worst = names[perm[X.cols() - 1]];
  for (int j = 0; j < X.cols(); ++j) {
    if ((X.col(j).array() == X(0, j)).all() && names[j] != "const") {
      worst = names[j];
      break;
    }
  }
  throw EstimationError("design is rank deficient: regressor '" + worst +
                        "' is constant or collinear");
}

Mat belief_design(const Dataset& ds, const BeliefOptions& opts,
                  std::vector<std::string>& names) {
  const int n = static_cast<int>(ds.size());
  Mat X(n, 4);
  for (int i = 0; i < n; ++i) {
    double z = ds.rec(i).z, c = ds.condition(i);
    X(i, 0) = 1.0;
    X(i, 1) = z;
    X(i, 2) = c;
    X(i, 3) = z * c;
  }
  names = {"const", "z", "c", "z_x_c"};
  append_fe(ds, opts.location_fe, opts.date_fe, X, names);
  return X;
}

BeliefUpdateFit fit_ols_belief(const Dataset& ds, const BeliefOptions& opts) {
  BeliefUpdateFit fit;
  fit.link = BeliefLink::linear;
  fit.design = belief_design(ds, opts, fit.names);
  const int n = static_cast<int>(ds.size()), k = static_cast<int>(fit.design.cols());
  if (n < k) throw EstimationError("fewer records than belief-model coefficients");
  check_design_rank(fit.design, fit.names);

  fit.response.resize(n);
  for (int i = 0; i < n; ++i) fit.response[i] = ds.delta_b(static_cast<std::size_t>(i));
  Eigen::ColPivHouseholderQR<Mat> qr(fit.design);
  fit.theta = qr.solve(fit.response);
  fit.residuals = fit.response - fit.design * fit.theta;
  double rss = fit.residuals.squaredNorm();
  fit.loglik_or_rss = rss;
  fit.root_mse = (n > k) ? std::sqrt(rss / (n - k)) : 0.0;
  fit.resid_sd = std::sqrt(rss / n);
  double s2 = (n > k) ? rss / (n - k) : 0.0;
  Mat xtx_inv = (fit.design.transpose() * fit.design)
                    .ldlt()
                    .solve(Mat::Identity(k, k));
  fit.covariance = s2 * xtx_inv;
  return fit;
}

double FracProbitModel::loglik(const Vec& theta) const {
  Vec eta = X * theta;
  double ll = 0.0;
  for (int i = 0; i < y.size(); ++i)
    ll += y[i] * log_std_normal_cdf(eta[i]) + (1.0 - y[i]) * log_std_normal_cdf(-eta[i]);
  return ll;
}

Vec FracProbitModel::grad(const Vec& theta) const {
  Vec eta = X * theta;
  Vec g = Vec::Zero(theta.size());
  for (int i = 0; i < y.size(); ++i) g += probit_u(eta[i], y[i]) * X.row(i).transpose();
  return g;
}

Mat FracProbitModel::hess(const Vec& theta) const {
  Vec eta = X * theta;
  Mat H = Mat::Zero(theta.size(), theta.size());
  for (int i = 0; i < y.size(); ++i)
    H += probit_uprime(eta[i], y[i]) * (X.row(i).transpose() * X.row(i));
  return H;
}

Mat FracProbitModel::score_outer(const Vec& theta) const {
  Vec eta = X * theta;
  Mat B = Mat::Zero(theta.size(), theta.size());
  for (int i = 0; i < y.size(); ++i) {
    double u = probit_u(eta[i], y[i]);
    B += u * u * (X.row(i).transpose() * X.row(i));
  }
  return B;
}

BeliefUpdateFit fit_fractional_probit(const Dataset& ds, const BeliefOptions& opts) {
  BeliefUpdateFit fit;
  fit.link = BeliefLink::fractional_probit;
  fit.design = belief_design(ds, opts, fit.names);
  check_design_rank(fit.design, fit.names);
  fit.response = transformed_response(ds);
  for (int i = 0; i < fit.response.size(); ++i)
    if (fit.response[i] < 0.0 || fit.response[i] > 1.0)
      throw ValidationError({"transformed response outside [0,1] at row " + std::to_string(i)});

  FracProbitModel model{fit.design, fit.response};
  Objective obj{[&](const Vec& v) { return model.loglik(v); },
                [&](const Vec& v) { return model.grad(v); },
                [&](const Vec& v) { return model.hess(v); }};
  auto res = maximize_loglik(obj, Vec::Zero(fit.design.cols()), {opts.tol, 300, 1e8});
  if (!res.converged)
    throw EstimationError("fractional probit failed to converge: " + res.message);
  if (!res.covariance_ok)
    throw EstimationError("fractional probit information matrix is singular");
  fit.theta = res.argmax;
  fit.loglik_or_rss = res.loglik;
  if (opts.sandwich) {
    Mat Ainv = res.covariance;  // inverse observed information
    fit.covariance = Ainv * model.score_outer(fit.theta) * Ainv;
  } else {
    fit.covariance = res.covariance;
  }
  fit.converged = true;
  return fit;
}

double BetaRegModel::loglik(const Vec& p) const {
  const int k = static_cast<int>(X.cols());
  Vec eta = X * p.head(k);
  double scale = std::exp(p[k]);
  double ll = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    double mu = std_normal_cdf(eta[i]);
    double am = mu * scale, bm = (1.0 - mu) * scale;
    if (am <= 0.0 || bm <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += std::lgamma(scale) - std::lgamma(am) - std::lgamma(bm) +
          (am - 1.0) * std::log(y[i]) + (bm - 1.0) * std::log1p(-y[i]);
  }
  return ll;
}

Vec BetaRegModel::grad(const Vec& p) const {
  const int k = static_cast<int>(X.cols());
  Vec eta = X * p.head(k);
  double scale = std::exp(p[k]);
  Vec g = Vec::Zero(k + 1);
  for (int i = 0; i < y.size(); ++i) {
    double mu = std_normal_cdf(eta[i]);
    double am = mu * scale, bm = (1.0 - mu) * scale;
    double ystar = std::log(y[i]) - std::log1p(-y[i]);
    double mustar = digamma(am) - digamma(bm);
    g.head(k) += scale * (ystar - mustar) * std_normal_pdf(eta[i]) * X.row(i).transpose();
    double dl_dscale = digamma(scale) - mu * digamma(am) - (1.0 - mu) * digamma(bm) +
                       mu * std::log(y[i]) + (1.0 - mu) * std::log1p(-y[i]);
    g[k] += scale * dl_dscale;  // chain rule through zeta = log scale
  }
  return g;
}

BeliefUpdateFit fit_beta_regression(const Dataset& ds, const BeliefOptions& opts) {
  BeliefUpdateFit fit;
  fit.link = BeliefLink::beta_probit;
  fit.design = belief_design(ds, opts, fit.names);
  check_design_rank(fit.design, fit.names);
  fit.response = transformed_response(ds);
  const int n = static_cast<int>(fit.response.size()), k = static_cast<int>(fit.design.cols());

  // boundary responses shrunk by the usual (y*(n-1)+1/2)/n adjustment
  int adjusted = 0;
  for (int i = 0; i < n; ++i) {
    if (fit.response[i] <= 0.0 || fit.response[i] >= 1.0) {
      fit.response[i] = (fit.response[i] * (n - 1) + 0.5) / n;
      ++adjusted;
    }
    if (fit.response[i] <= 0.0 || fit.response[i] >= 1.0)
      throw ValidationError({"response at row " + std::to_string(i) +
                             " still on the boundary after adjustment"});
  }
  if (adjusted)
    fit.warnings.push_back(std::to_string(adjusted) + " boundary response(s) shrunk inward");

  double mean = fit.response.mean();
  double var = (fit.response.array() - mean).square().sum() / n;
  if (var < 1e-12) {
    // scale is unidentified when the response is (nearly) constant
    fit.theta = Vec::Zero(k);
    fit.theta[0] = std_normal_quantile(std::min(std::max(mean, 1e-12), 1.0 - 1e-12));
    fit.scale_hat = std::exp(12.0);
    fit.covariance = Mat::Zero(k, k);
    fit.warnings.push_back("degenerate scale: response is numerically constant, scale pegged");
    fit.converged = true;
    return fit;
  }

  BetaRegModel model{fit.design, fit.response};
  Vec init = Vec::Zero(k + 1);
  init[0] = std_normal_quantile(mean);
  init[k] = std::log(std::max(mean * (1.0 - mean) / var - 1.0, 1.0));
  Objective obj{[&](const Vec& v) { return model.loglik(v); },
                [&](const Vec& v) { return model.grad(v); },
                nullptr};
  auto res = maximize_loglik(obj, init, {opts.tol, 300, 1e8});
  if (!res.converged)
    throw EstimationError("beta regression failed to converge: " + res.message);
  if (!res.covariance_ok)
    throw EstimationError("beta regression information matrix is singular");
  fit.theta = res.argmax.head(k);
  fit.scale_hat = std::exp(res.argmax[k]);
  fit.loglik_or_rss = res.loglik;
  fit.covariance = res.covariance.topLeftCorner(k, k);
  fit.scale_se = fit.scale_hat * std::sqrt(res.covariance(k, k));
  fit.converged = true;
  return fit;
}

GroupATE ate_by_group(const BeliefUpdateFit& fit) {
  if (!fit.converged) throw EstimationError("ate_by_group requires a converged fit");
  const int k = static_cast<int>(fit.theta.size());
  auto contrast = [&](double w1, double w2, double w3) {
    // d/dtheta of L(t0 + w1 t1 + w2 t2 + w3 t3) evaluated twice and differenced
    Vec g = Vec::Zero(k);
    double est;
    if (fit.link == BeliefLink::linear) {
      est = w1 * fit.theta[1] + w3 * fit.theta[3];
      g[1] = w1;
      g[3] = w3;
    } else {
      double hi = fit.theta[0] + w1 * fit.theta[1] + w2 * fit.theta[2] + w3 * fit.theta[3];
      double lo = fit.theta[0] + w2 * fit.theta[2];
      est = 2.0 * (std_normal_cdf(hi) - std_normal_cdf(lo));  // back to the delta_b scale
      double dhi = 2.0 * std_normal_pdf(hi), dlo = 2.0 * std_normal_pdf(lo);
      g[0] = dhi - dlo;
      g[1] = dhi * w1;
      g[2] = (dhi - dlo) * w2;
      g[3] = dhi * w3;
    }
    EstCell cell;
    cell.estimate = est;
    double v = g.transpose() * fit.covariance * g;
    cell.se = std::sqrt(std::max(v, 0.0));
    cell.p = cell.se > 0 ? normal_two_sided_p(est / cell.se) : 1.0;
    return cell;
  };
  GroupATE out;
  out.below = contrast(1.0, 0.0, 0.0);
  out.above = contrast(1.0, 1.0, 1.0);
  return out;
}

ResidualOut residuals(const BeliefUpdateFit& fit, const Dataset& ds) {
  if (fit.link != BeliefLink::linear)
    throw EstimationError("control-function residuals are defined for the linear link");
  ResidualOut out;
  Vec y(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) y[static_cast<int>(i)] = ds.delta_b(i);
  out.e_hat = y - fit.design * fit.theta;
  out.sd = std::sqrt(out.e_hat.squaredNorm() / static_cast<double>(ds.size()));
  return out;
}

}  // namespace stratpart

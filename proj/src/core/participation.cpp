#include "core/participation.hpp"

#include <cmath>
#include <limits>

#include "core/special.hpp"

namespace stratpart {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// at a diverged terminal point every record sits on its own side of the boundary
bool looks_separated(const Mat& X, const Vec& y, const Vec& coef) {
  Vec eta = X * coef;
  double slack = 1e-6 * std::max(1.0, eta.cwiseAbs().maxCoeff());
  for (int i = 0; i < y.size(); ++i)
    if ((y[i] > 0.5 ? eta[i] : -eta[i]) < -slack) return false;
  return true;
}

struct ProbitOut {
  Vec coef;
  Mat cov;
  double loglik = 0.0;
};

ProbitOut probit_mle(const Mat& X, const Vec& y, double tol, const std::string& label) {
  double sy = y.sum();
  if (sy <= 0.0 || sy >= static_cast<double>(y.size()))
    throw EstimationError(label + ": outcome has a single class");
  FracProbitModel model{X, y};
  Objective obj{[&](const Vec& v) { return model.loglik(v); },
                [&](const Vec& v) { return model.grad(v); },
                [&](const Vec& v) { return model.hess(v); }};
  auto res = maximize_loglik(obj, Vec::Zero(X.cols()), {tol, 300, 1e8});
  if (!res.converged) {
    if (looks_separated(X, y, res.argmax))
      throw EstimationError(label + ": outcome is perfectly separated by the design");
    throw EstimationError(label + " failed to converge: " + res.message);
  }
  if (!res.covariance_ok)
    throw EstimationError(label + ": information matrix is singular");
  return {res.argmax, res.covariance, res.loglik};
}

Mat gamma_block(const Dataset& ds, const ParticipationSpec& spec,
                std::vector<std::string>& gnames, std::vector<std::string>& notes) {
  const int n = static_cast<int>(ds.size());
  Mat G(n, 0);
  std::vector<int> outcome(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) outcome[i] = ds.rec(i).a;
  auto add_factor = [&](auto getter, const std::string& prefix) {
    std::vector<std::string> vals(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) vals[i] = getter(ds.rec(i));
    auto enc = encode_factor(vals, outcome, prefix);
    notes.insert(notes.end(), enc.merge_notes.begin(), enc.merge_notes.end());
    if (enc.labels.empty()) return;
    Mat D = Mat::Zero(n, static_cast<int>(enc.labels.size()));
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (enc.column_of_record[i] >= 0) D(static_cast<int>(i), enc.column_of_record[i]) = 1.0;
    Mat GD(n, G.cols() + D.cols());
    GD << G, D;
    G = std::move(GD);
    gnames.insert(gnames.end(), enc.labels.begin(), enc.labels.end());
  };
  if (spec.location_fe) add_factor([](const SubjectRecord& r) { return r.location; }, "loc");
  if (spec.date_fe) {
    add_factor([](const SubjectRecord& r) { return r.enroll_date; }, "enroll");
    add_factor([](const SubjectRecord& r) { return r.treat_date; }, "treat");
  }
  if (spec.use_covariates && !ds.covariate_names().empty()) {
    Mat C(n, static_cast<int>(ds.covariate_names().size()));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < C.cols(); ++j) C(i, j) = ds.rec(i).x[j];
    Mat GC(n, G.cols() + C.cols());
    GC << G, C;
    G = std::move(GC);
    gnames.insert(gnames.end(), ds.covariate_names().begin(), ds.covariate_names().end());
  }
  return G;
}

void fill_base(ParticipationFit& fit, const Dataset& ds, const Mat& G,
               const std::vector<std::string>& gnames) {
  const int n = static_cast<int>(ds.size());
  fit.k_gamma = static_cast<int>(G.cols());
  fit.db.resize(n);
  fit.a.resize(n);
  for (int i = 0; i < n; ++i) {
    fit.db[i] = ds.delta_b(static_cast<std::size_t>(i));
    fit.a[i] = ds.rec(static_cast<std::size_t>(i)).a;
  }
  fit.X.resize(n, 2 + G.cols());
  fit.X.col(0).setOnes();
  fit.X.col(1) = fit.db;
  if (G.cols() > 0) fit.X.rightCols(G.cols()) = G;
  fit.param_names = {"const", "delta_b"};
  fit.param_names.insert(fit.param_names.end(), gnames.begin(), gnames.end());
}

void split_params(ParticipationFit& fit) {
  fit.alpha_hat = fit.params[0];
  fit.beta_hat = fit.params[1];
  fit.gamma_hat = fit.params.segment(2, fit.k_gamma);
}

}  // namespace

std::string estimator_name(PEstimator e) {
  switch (e) {
    case PEstimator::probit: return "probit";
    case PEstimator::cf_twostep: return "cf_twostep";
    case PEstimator::cf_joint_mle: return "cf_joint_mle";
    case PEstimator::newey_minchi2: return "newey_minchi2";
  }
  return "unknown";
}

double ParticipationFit::se(int j) const {
  return std::sqrt(std::max(covariance(j, j), 0.0));
}

Mat participation_design(const Dataset& ds, const ParticipationSpec& spec,
                         std::vector<std::string>& names) {
  std::vector<std::string> gnames, notes;
  Mat G = gamma_block(ds, spec, gnames, notes);
  ParticipationFit tmp;
  fill_base(tmp, ds, G, gnames);
  names = tmp.param_names;
  return tmp.X;
}

ParticipationFit fit_probit(const Dataset& ds, const ParticipationSpec& spec) {
  ParticipationFit fit;
  fit.estimator = PEstimator::probit;
  std::vector<std::string> gnames;
  Mat G = gamma_block(ds, spec, gnames, fit.notes);
  fill_base(fit, ds, G, gnames);
  check_design_rank(fit.X, fit.param_names);

  auto out = probit_mle(fit.X, fit.a, spec.tol, "probit");
  fit.params = out.coef;
  fit.covariance = out.cov;
  fit.loglik = out.loglik;
  split_params(fit);
  fit.converged = true;
  return fit;
}

ParticipationFit fit_cf_twostep(const Dataset& ds, const ParticipationSpec& spec) {
  ParticipationFit fit;
  fit.estimator = PEstimator::cf_twostep;
  std::vector<std::string> gnames;
  Mat G = gamma_block(ds, spec, gnames, fit.notes);
  fill_base(fit, ds, G, gnames);

  BeliefOptions bopts;
  bopts.location_fe = spec.belief_fe;
  bopts.date_fe = spec.belief_fe;
  bopts.tol = spec.tol;
  auto stage1 = fit_ols_belief(ds, bopts);
  auto res1 = residuals(stage1, ds);
  fit.theta_stage1 = stage1.theta;
  fit.ehat = res1.e_hat;
  if (res1.sd < 1e-10)
    throw EstimationError(
        "first-stage residuals are (numerically) zero: control-function coefficient "
        "unidentified");

  Mat X2(fit.X.rows(), fit.X.cols() + 1);
  X2 << fit.X, fit.ehat;
  fit.X = std::move(X2);
  fit.param_names.push_back("cf_resid");
  check_design_rank(fit.X, fit.param_names);

  auto out = probit_mle(fit.X, fit.a, spec.tol, "control-function probit");
  fit.params = out.coef;
  fit.covariance = out.cov;
  fit.loglik = out.loglik;
  split_params(fit);
  fit.eta_hat = fit.params[fit.params.size() - 1];
  fit.notes.push_back(
      "stage-2 standard errors ignore the estimated first-stage residual; bootstrap the "
      "two-step pipeline for corrected inference");
  fit.converged = true;
  return fit;
}

double CfJointModel::loglik(const Vec& p) const {
  const int kd = static_cast<int>(D.cols()), kw = static_cast<int>(W.cols());
  double rho = std::tanh(p[kd + kw]);
  double sigma = std::exp(p[kd + kw + 1]);
  double v = 1.0 / std::sqrt(1.0 - rho * rho);
  Vec q = D * p.head(kd);
  Vec r = db - W * p.segment(kd, kw);
  double ll = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double m = (q[i] + (rho / sigma) * r[i]) * v;
    ll += (a[i] > 0.5 ? log_std_normal_cdf(m) : log_std_normal_cdf(-m));
    ll += -0.5 * kLog2Pi - 0.5 * (r[i] / sigma) * (r[i] / sigma) - p[kd + kw + 1];
  }
  return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
}

Vec CfJointModel::grad(const Vec& p) const {
  const int kd = static_cast<int>(D.cols()), kw = static_cast<int>(W.cols());
  double rho = std::tanh(p[kd + kw]);
  double sigma = std::exp(p[kd + kw + 1]);
  double v = 1.0 / std::sqrt(1.0 - rho * rho);
  Vec q = D * p.head(kd);
  Vec r = db - W * p.segment(kd, kw);
  Vec out = Vec::Zero(p.size());
  for (int i = 0; i < a.size(); ++i) {
    double m = (q[i] + (rho / sigma) * r[i]) * v;
    double g = a[i] > 0.5 ? inv_mills(m) : -inv_mills(-m);
    out.head(kd) += g * v * D.row(i).transpose();
    out.segment(kd, kw) +=
        (-g * v * rho / sigma + r[i] / (sigma * sigma)) * W.row(i).transpose();
    out[kd + kw] += g * v * (rho * q[i] + r[i] / sigma);
    out[kd + kw + 1] += -g * v * rho * r[i] / sigma + (r[i] / sigma) * (r[i] / sigma) - 1.0;
  }
  return out;
}

ParticipationFit fit_cf_joint_mle(const Dataset& ds, const ParticipationSpec& spec) {
  ParticipationFit fit;
  fit.estimator = PEstimator::cf_joint_mle;
  std::vector<std::string> gnames;
  Mat G = gamma_block(ds, spec, gnames, fit.notes);
  fill_base(fit, ds, G, gnames);
  check_design_rank(fit.X, fit.param_names);

  BeliefOptions bopts;
  bopts.location_fe = spec.belief_fe;
  bopts.date_fe = spec.belief_fe;
  bopts.tol = spec.tol;
  auto stage1 = fit_ols_belief(ds, bopts);
  auto naive = probit_mle(fit.X, fit.a, spec.tol, "probit (joint MLE start)");

  std::vector<std::string> wnames;
  fit.W = belief_design(ds, bopts, wnames);
  const int kd = static_cast<int>(fit.X.cols()), kw = static_cast<int>(fit.W.cols());
  CfJointModel model{fit.X, fit.W, fit.db, fit.a};

  Vec init(kd + kw + 2);
  init.head(kd) = naive.coef;
  init.segment(kd, kw) = stage1.theta;
  init[kd + kw] = 0.0;
  init[kd + kw + 1] = std::log(std::max(stage1.resid_sd, 1e-8));

  Objective obj{[&](const Vec& v) { return model.loglik(v); },
                [&](const Vec& v) { return model.grad(v); },
                nullptr};
  auto res = maximize_loglik(obj, init, {spec.tol, 300, 1e8});
  if (!res.converged || std::fabs(res.argmax[kd + kw]) > 6.0) {
    if (std::fabs(res.argmax[kd + kw]) > 6.0)
      throw EstimationError(
          "joint MLE pushed the error correlation to the boundary (|corr| -> 1): no "
          "interior maximum on this sample");
    throw EstimationError("joint MLE failed to converge: " + res.message);
  }
  if (!res.covariance_ok)
    throw EstimationError("joint MLE information matrix is singular");

  fit.params_internal = res.argmax;
  fit.cov_internal = res.covariance;
  fit.i_atrho = kd + kw;
  fit.i_logsig = kd + kw + 1;
  fit.loglik = res.loglik;
  fit.theta_stage1 = res.argmax.segment(kd, kw);

  double rho = std::tanh(res.argmax[fit.i_atrho]);
  double sigma = std::exp(res.argmax[fit.i_logsig]);
  // reporting scale: identity on coefficients, tanh/exp on the last two coordinates
  Vec jac = Vec::Ones(res.argmax.size());
  jac[fit.i_atrho] = 1.0 - rho * rho;
  jac[fit.i_logsig] = sigma;
  fit.params = res.argmax;
  fit.params[fit.i_atrho] = rho;
  fit.params[fit.i_logsig] = sigma;
  fit.covariance = jac.asDiagonal() * res.covariance * jac.asDiagonal();
  for (const auto& nm : wnames) fit.param_names.push_back("db_" + nm);
  fit.param_names.push_back("corr_e_u");
  fit.param_names.push_back("sd_e");

  split_params(fit);
  fit.rho_hat = rho;
  fit.sigma_e_hat = sigma;
  fit.converged = true;
  return fit;
}

ParticipationFit fit_newey_minchi2(const Dataset& ds, const ParticipationSpec& spec) {
  ParticipationFit fit;
  fit.estimator = PEstimator::newey_minchi2;
  std::vector<std::string> gnames;
  Mat G = gamma_block(ds, spec, gnames, fit.notes);
  fill_base(fit, ds, G, gnames);
  const int n = static_cast<int>(ds.size()), kg = static_cast<int>(G.cols());

  // all exogenous columns: instruments (z, c, z*c) plus the included dummies/covariates
  const int kw = 4 + kg;
  Mat Wx(n, kw);
  std::vector<std::string> wnames = {"const", "z", "c", "z_x_c"};
  wnames.insert(wnames.end(), gnames.begin(), gnames.end());
  for (int i = 0; i < n; ++i) {
    double z = ds.rec(static_cast<std::size_t>(i)).z;
    double c = ds.condition(static_cast<std::size_t>(i));
    Wx(i, 0) = 1.0;
    Wx(i, 1) = z;
    Wx(i, 2) = c;
    Wx(i, 3) = z * c;
  }
  if (kg > 0) Wx.rightCols(kg) = G;
  check_design_rank(Wx, wnames);
  if (n <= kw) throw EstimationError("too few records for the reduced-form regressions");

  // first stage: delta_b on all exogenous columns, classical covariance
  Eigen::ColPivHouseholderQR<Mat> qr(Wx);
  Vec pi_hat = qr.solve(fit.db);
  Vec resid = fit.db - Wx * pi_hat;
  double s2 = resid.squaredNorm() / (n - kw);
  Mat wtw_inv = (Wx.transpose() * Wx).ldlt().solve(Mat::Identity(kw, kw));
  Mat v_pi = s2 * wtw_inv;

  // reduced-form probit of the outcome on the same columns
  auto rf = probit_mle(Wx, fit.a, spec.tol, "reduced-form probit");

  // lambda = alpha*e0 + beta*pi + gamma'selectors: minimum-distance in delta = (alpha, beta, gamma)
  const int kd = 2 + kg;
  Mat D = Mat::Zero(kw, kd);
  D(0, 0) = 1.0;
  D.col(1) = pi_hat;
  for (int g = 0; g < kg; ++g) D(4 + g, 2 + g) = 1.0;

  auto weighted_solve = [&](double beta) {
    Mat omega = rf.cov + beta * beta * v_pi;
    Eigen::SelfAdjointEigenSolver<Mat> eig(omega);
    Vec ev = eig.eigenvalues();
    double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    int dropped = 0;
    Vec inv_ev = Vec::Zero(kw);
    for (int j = 0; j < kw; ++j) {
      if (ev[j] > cutoff)
        inv_ev[j] = 1.0 / ev[j];
      else
        ++dropped;
    }
    Mat omega_inv = eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
    Mat M = D.transpose() * omega_inv * D;
    Eigen::LDLT<Mat> ldlt(M);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
      throw EstimationError("minimum-distance system is singular");
    Vec delta = ldlt.solve(D.transpose() * omega_inv * rf.coef);
    Mat cov = ldlt.solve(Mat::Identity(kd, kd));
    return std::tuple<Vec, Mat, int>(delta, 0.5 * (cov + cov.transpose()), dropped);
  };

  // two weight updates: start from the outcome covariance alone, then plug beta back in
  auto [delta, cov, dropped] = weighted_solve(0.0);
  for (int pass = 0; pass < 2; ++pass) std::tie(delta, cov, dropped) = weighted_solve(delta[1]);
  if (dropped > 0)
    fit.notes.push_back("distance weight near-singular: " + std::to_string(dropped) +
                        " eigenvalue(s) dropped (pseudo-inverse)");

  fit.params = delta;
  fit.covariance = cov;
  fit.theta_stage1 = pi_hat.head(4);
  split_params(fit);
  fit.notes.push_back(
      "coefficients share the reduced-form error normalization; levels are not directly "
      "comparable to the MLE scale");
  fit.converged = true;
  return fit;
}

namespace {

// number of leading parameters that enter the participation index
int index_width(const ParticipationFit& fit) {
  return 2 + fit.k_gamma + (fit.estimator == PEstimator::cf_twostep ? 1 : 0);
}

EstCell delta_cell(const ParticipationFit& fit, const std::function<double(const Vec&)>& f) {
  EstCell c;
  c.estimate = f(fit.params);
  Vec g = finite_diff_grad(f, fit.params);
  double var = g.transpose() * fit.covariance * g;
  c.se = std::sqrt(std::max(var, 0.0));
  c.p = c.se > 0.0 ? normal_two_sided_p(c.estimate / c.se) : 1.0;
  return c;
}

enum class At { own, fixed, means };

// conditional participation index of record i under parameter vector p; for the
// joint MLE this includes the correlation correction (rho/sd)*r scaled by
// 1/sqrt(1-rho^2), for the two-step the residual column is already in X
double cond_index(const ParticipationFit& fit, const Vec& p, int i) {
  const int kidx = index_width(fit);
  double idx = fit.X.row(i).head(kidx).dot(p.head(kidx));
  if (fit.estimator != PEstimator::cf_joint_mle) return idx;
  double rho = p[p.size() - 2], sigma = p[p.size() - 1];
  const int kd = 2 + fit.k_gamma;
  double r = fit.db[i] - fit.W.row(i).dot(p.segment(kd, fit.W.cols()));
  return (idx + rho / sigma * r) / std::sqrt(1.0 - rho * rho);
}

// structural (counterfactual) index at a fixed delta_b; averages over the
// record's covariates, keeping the two-step residual as unobserved heterogeneity
double struct_index(const ParticipationFit& fit, const Vec& p, int i, double at) {
  const int kidx = index_width(fit);
  Vec row = fit.X.row(i).head(kidx).transpose();
  row[1] = at;
  return row.dot(p.head(kidx));
}

double cond_index_at_means(const ParticipationFit& fit, const Vec& p) {
  const int kidx = index_width(fit);
  Vec row = fit.X.colwise().mean().head(kidx).transpose();
  double idx = row.dot(p.head(kidx));
  if (fit.estimator != PEstimator::cf_joint_mle) return idx;
  double rho = p[p.size() - 2], sigma = p[p.size() - 1];
  const int kd = 2 + fit.k_gamma;
  double rbar = fit.db.mean() - fit.W.colwise().mean().dot(p.segment(kd, fit.W.cols()));
  return (idx + rho / sigma * rbar) / std::sqrt(1.0 - rho * rho);
}

// d(index)/d(delta_b) holding the control-function term fixed
double index_slope(const ParticipationFit& fit, const Vec& p, bool conditional) {
  if (conditional && fit.estimator == PEstimator::cf_joint_mle) {
    double rho = p[p.size() - 2];
    return p[1] / std::sqrt(1.0 - rho * rho);
  }
  return p[1];
}

std::function<double(const Vec&)> margin_fn(const ParticipationFit& fit, At at, double value) {
  const int n = static_cast<int>(fit.X.rows());
  return [&fit, at, value, n](const Vec& p) {
    if (at == At::means) return std_normal_cdf(cond_index_at_means(fit, p));
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += std_normal_cdf(at == At::own ? cond_index(fit, p, i)
                                          : struct_index(fit, p, i, value));
    return acc / n;
  };
}

std::function<double(const Vec&)> ape_fn(const ParticipationFit& fit, At at, double value) {
  const int n = static_cast<int>(fit.X.rows());
  return [&fit, at, value, n](const Vec& p) {
    if (at == At::means)
      return std_normal_pdf(cond_index_at_means(fit, p)) * index_slope(fit, p, true);
    double acc = 0.0;
    bool cond = at == At::own;
    double slope = index_slope(fit, p, cond);
    for (int i = 0; i < n; ++i)
      acc += std_normal_pdf(cond ? cond_index(fit, p, i) : struct_index(fit, p, i, value));
    return acc / n * slope;
  };
}

}  // namespace

MarginTable predictive_margins(const ParticipationFit& fit, const Dataset& ds,
                               const std::vector<double>& grid) {
  if (!fit.converged) throw EstimationError("predictive margins need a converged fit");
  if (static_cast<int>(ds.size()) != fit.X.rows())
    throw EstimationError("dataset does not match the fitted design");
  MarginTable out;
  out.overall = delta_cell(fit, margin_fn(fit, At::own, 0.0));
  out.at_means = delta_cell(fit, margin_fn(fit, At::means, 0.0));
  for (double at : grid) out.at_grid.push_back({at, delta_cell(fit, margin_fn(fit, At::fixed, at))});
  return out;
}

APETable ape(const ParticipationFit& fit, const Dataset& ds) {
  if (!fit.converged) throw EstimationError("APEs need a converged fit");
  if (static_cast<int>(ds.size()) != fit.X.rows())
    throw EstimationError("dataset does not match the fitted design");
  APETable out;
  out.overall = delta_cell(fit, ape_fn(fit, At::own, 0.0));
  out.at_means = delta_cell(fit, ape_fn(fit, At::means, 0.0));
  out.at_pre = delta_cell(fit, ape_fn(fit, At::fixed, 0.0));
  out.at_post = delta_cell(fit, ape_fn(fit, At::fixed, fit.db.mean()));
  return out;
}

MarginValues margin_estimates(const ParticipationFit& fit, const std::vector<double>& grid) {
  if (!fit.converged) throw EstimationError("predictive margins need a converged fit");
  MarginValues out;
  out.overall = margin_fn(fit, At::own, 0.0)(fit.params);
  out.at_means = margin_fn(fit, At::means, 0.0)(fit.params);
  for (double at : grid) out.at_grid.push_back(margin_fn(fit, At::fixed, at)(fit.params));
  return out;
}

ApeValues ape_estimates(const ParticipationFit& fit) {
  if (!fit.converged) throw EstimationError("APEs need a converged fit");
  ApeValues out;
  out.overall = ape_fn(fit, At::own, 0.0)(fit.params);
  out.at_means = ape_fn(fit, At::means, 0.0)(fit.params);
  out.at_pre = ape_fn(fit, At::fixed, 0.0)(fit.params);
  out.at_post = ape_fn(fit, At::fixed, fit.db.mean())(fit.params);
  return out;
}

DeltaResult delta_method(const ParticipationFit& fit,
                         const std::function<double(const Vec&)>& functional) {
  DeltaResult out;
  out.estimate = functional(fit.params);
  Vec g = finite_diff_grad(functional, fit.params);
  double var = g.transpose() * fit.covariance * g;
  out.se = std::sqrt(std::max(var, 0.0));
  if (g.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + std::fabs(out.estimate))) {
    out.degenerate_gradient = true;
    out.p = 1.0;
    return out;
  }
  out.p = out.se > 0.0 ? normal_two_sided_p(out.estimate / out.se) : 1.0;
  return out;
}

}  // namespace stratpart

#include "core/optim.hpp"

#include <cmath>
#include <limits>

namespace stratpart {

namespace {
const double kFdScale = std::cbrt(std::numeric_limits<double>::epsilon());  // ~6.06e-6
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  Vec g(x.size());
  Vec xp = x;
  for (int j = 0; j < x.size(); ++j) {
    double h = step > 0.0 ? step : kFdScale * std::max(1.0, std::fabs(x[j]));
    double xj = x[j];
    xp[j] = xj + h;
    double fp = f(xp);
    xp[j] = xj - h;
    double fm = f(xp);
    xp[j] = xj;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat finite_diff_hessian_of_grad(const std::function<Vec(const Vec&)>& g, const Vec& x) {
  const int k = static_cast<int>(x.size());
  Mat H(k, k);
  Vec xp = x;
  for (int j = 0; j < k; ++j) {
    double h = kFdScale * std::max(1.0, std::fabs(x[j]));
    double xj = x[j];
    xp[j] = xj + h;
    Vec gp = g(xp);
    xp[j] = xj - h;
    Vec gm = g(xp);
    xp[j] = xj;
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

Mat finite_diff_hessian(const std::function<double(const Vec&)>& f, const Vec& x) {
  auto g = [&](const Vec& v) { return finite_diff_grad(f, v); };
  return finite_diff_hessian_of_grad(g, x);
}

OptResult maximize_loglik(const Objective& obj, Vec x, const OptimOptions& opts) {
  OptResult res;
  auto gradf = [&](const Vec& v) {
    return obj.gradient ? obj.gradient(v) : finite_diff_grad(obj.value, v);
  };
  auto hessf = [&](const Vec& v) {
    if (obj.hessian) return obj.hessian(v);
    if (obj.gradient) return finite_diff_hessian_of_grad(obj.gradient, v);
    return finite_diff_hessian(obj.value, v);
  };

  double f = obj.value(x);
  if (!std::isfinite(f)) {
    res.message = "objective not finite at the starting point";
    res.argmax = x;
    res.loglik = f;
    return res;
  }
  Vec g = gradf(x);
  int it = 0;
  double drift = 0.0;  // parameter movement accumulated while the objective is flat
  for (; it < opts.max_iter; ++it) {
    if (!g.allFinite()) {
      res.message = "gradient not finite";
      break;
    }
    if (g.lpNorm<Eigen::Infinity>() <= opts.tol) {
      res.converged = true;
      break;
    }
    Mat A = -hessf(x);
    A = 0.5 * (A + A.transpose());
    double scale = std::max(1.0, A.diagonal().cwiseAbs().maxCoeff());
    // ridge escalation when the Hessian is not negative definite
    double ridge = 0.0;
    Eigen::LDLT<Mat> ldlt(A);
    while ((ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) &&
           ridge < 1e12) {
      ridge = (ridge == 0.0) ? 1e-8 * scale : ridge * 10.0;
      ldlt.compute(A + ridge * Mat::Identity(A.rows(), A.cols()));
    }
    Vec d = ldlt.solve(g);
    if (!d.allFinite() || g.dot(d) <= 0.0) d = g / std::max(1.0, g.norm());
    double gd = g.dot(d);
    double t = 1.0;
    bool stepped = false;
    Vec xn;
    double fn = 0.0;
    double fnoise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(f));
    if (gd <= fnoise) {
      // the predicted gain is below the representation noise of the objective, so an
      // Armijo test cannot certify progress; accept the full Newton step iff the
      // freshly evaluated gradient shrinks (it is not differenced, so it stays accurate)
      xn = x + d;
      Vec gn = gradf(xn);
      fn = obj.value(xn);
      if (gn.allFinite() && std::isfinite(fn) &&
          gn.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>()) {
        stepped = true;
      } else {
        res.message = "gradient stalled at the numerical noise floor of the objective";
        break;
      }
    } else {
      while (t > 1e-14) {
        xn = x + t * d;
        fn = obj.value(xn);
        if (std::isfinite(fn) && fn >= f + 1e-4 * t * gd) {
          stepped = true;
          break;
        }
        t *= 0.5;
      }
    }
    if (!stepped) {
      res.message = "line search failed to improve the objective";
      break;
    }
    // sustained movement with near-zero gain means the supremum sits at infinity
    // (separated binary data, correlation running to a boundary): not a maximum
    double gain = fn - f;
    if (gain < 1e-6 * (1.0 + std::fabs(fn)))
      drift += (t * d).lpNorm<Eigen::Infinity>();
    else
      drift = 0.0;
    x = xn;
    f = fn;
    g = gradf(x);
    if (drift > 2.0) {
      res.message = "drifting on a flat likelihood (diverging MLE, e.g. separation)";
      break;
    }
    if (x.lpNorm<Eigen::Infinity>() > opts.param_bound) {
      res.message = "parameters diverging (possible separation or unbounded likelihood)";
      break;
    }
  }
  if (it == opts.max_iter) res.message = "maximum iterations reached";

  res.iterations = it;
  res.argmax = x;
  res.loglik = f;
  res.gradient_norm = g.allFinite() ? g.lpNorm<Eigen::Infinity>()
                                    : std::numeric_limits<double>::infinity();
  if (res.converged) {
    Mat A = -hessf(x);
    A = 0.5 * (A + A.transpose());
    // a vanished gradient with vanished curvature is a plateau at the edge of machine
    // precision (e.g. separated binary data where the MLE sits at infinity), not a maximum
    if (!A.allFinite() || A.diagonal().maxCoeff() < 1e-10) {
      res.converged = false;
      res.message = "curvature vanished at the terminal point (diverging MLE, e.g. separation)";
      return res;
    }
    Eigen::LDLT<Mat> ldlt(A);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
      Mat cov = ldlt.solve(Mat::Identity(A.rows(), A.cols()));
      res.covariance = 0.5 * (cov + cov.transpose());
      res.covariance_ok = res.covariance.allFinite();
    } else {
      res.message = "Hessian singular or not negative definite at the optimum";
    }
  }
  return res;
}

double max_grad_rel_err(const Objective& obj, const Vec& x) {
  Vec ga = obj.gradient(x);
  Vec gf = finite_diff_grad(obj.value, x);
  double worst = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    double denom = std::max({1.0, std::fabs(ga[j]), std::fabs(gf[j])});
    worst = std::max(worst, std::fabs(ga[j] - gf[j]) / denom);
  }
  return worst;
}

}  // namespace stratpart

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace stratpart {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// objective to be maximized; gradient/hessian optional (finite differences otherwise)
struct Objective {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
};

struct OptimOptions {
  double tol = 1e-8;       // on the gradient infinity norm
  int max_iter = 300;
  double param_bound = 1e8;  // divergence guard (separation, flat directions)
};

struct OptResult {
  Vec argmax;
  double loglik = 0.0;
  Mat covariance;          // inverse negative Hessian at the optimum
  bool covariance_ok = false;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::string message;
};

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double step = 0.0);
Mat finite_diff_hessian_of_grad(const std::function<Vec(const Vec&)>& g, const Vec& x);
Mat finite_diff_hessian(const std::function<double(const Vec&)>& f, const Vec& x);

OptResult maximize_loglik(const Objective& obj, Vec init, const OptimOptions& opts = {});

// max over coordinates of |analytic - central difference| / max(1, |analytic|, |fd|)
double max_grad_rel_err(const Objective& obj, const Vec& x);

}  // namespace stratpart

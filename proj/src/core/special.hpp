#pragma once

namespace stratpart {

// standard normal
double std_normal_pdf(double x);
double std_normal_cdf(double x);
double log_std_normal_cdf(double x);
double std_normal_quantile(double p);
double inv_mills(double x);  // phi(x)/Phi(x), stable deep in the left tail
double normal_two_sided_p(double z);

// gamma family
double digamma(double x);
double trigamma(double x);
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);
double chi2_sf(double x, double df);

// beta family
double regularized_inc_beta(double a, double b, double x);
double beta_cdf(double x, double a, double b);

}  // namespace stratpart

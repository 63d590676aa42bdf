#include "core/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "core/rng.hpp"
#include "core/special.hpp"
#include "json.hpp"

namespace stratpart {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * x);
  return buf;
}

}  // namespace

void validate_config(const SimConfig& cfg) {
  std::vector<std::string> issues;
  if (cfg.n < 1) issues.push_back("n must be at least 1");
  if (!(cfg.treat_prob > 0.0 && cfg.treat_prob < 1.0))
    issues.push_back("treat_prob must lie strictly inside (0,1)");
  for (double s : {cfg.prior_shape_a, cfg.prior_shape_b, cfg.ref_shape_a, cfg.ref_shape_b})
    if (!(s > 0.0)) issues.push_back("beta seed shapes must be positive");
  if (cfg.locations.empty()) issues.push_back("at least one location is required");
  for (const auto& loc : cfg.locations) {
    if (loc.name.empty()) issues.push_back("location name must be non-empty");
    if (!(loc.signal > 0.0 && loc.signal < 1.0))
      issues.push_back("signal for '" + loc.name + "' must lie inside (0,1)");
    if (!(loc.share > 0.0)) issues.push_back("share for '" + loc.name + "' must be positive");
  }
  if (cfg.enroll_days.empty()) issues.push_back("at least one enrollment day is required");
  if (cfg.treat_days.empty()) issues.push_back("at least one treatment day is required");
  for (const auto& d : cfg.enroll_days)
    if (d.label.empty() || !(d.weight > 0.0))
      issues.push_back("enrollment days need non-empty labels and positive weights");
  for (const auto& d : cfg.treat_days)
    if (d.label.empty() || !(d.weight > 0.0))
      issues.push_back("treatment days need non-empty labels and positive weights");
  if (cfg.psi != "group_theta" && cfg.psi != "linear_gap")
    issues.push_back("psi must be 'group_theta' or 'linear_gap'");
  if (!std::isfinite(cfg.psi_slope)) issues.push_back("psi_slope must be finite");
  if (!(cfg.truth.sigma_e >= 0.0)) issues.push_back("sigma_e must be non-negative");
  if (!(std::abs(cfg.truth.rho) < 1.0)) issues.push_back("|rho| must be below 1");
  if (!cfg.truth.gamma.empty())
    issues.push_back("planted covariate effects are not generated; gamma must be empty");
  if (!issues.empty()) throw ValidationError(issues);
}

GenResult generate_population(const SimConfig& cfg) {
  validate_config(cfg);
  const auto& t = cfg.truth;
  const double rho_c = std::sqrt(1.0 - t.rho * t.rho);

  std::vector<double> loc_w, enr_w, trt_w;
  for (const auto& l : cfg.locations) loc_w.push_back(l.share);
  for (const auto& d : cfg.enroll_days) enr_w.push_back(d.weight);
  for (const auto& d : cfg.treat_days) trt_w.push_back(d.weight);

  RandomStream rng(cfg.seed, 0);
  std::vector<SubjectRecord> recs(cfg.n);
  int clipped = 0;
  for (int i = 0; i < cfg.n; ++i) {
    auto& r = recs[i];
    char id[16];
    std::snprintf(id, sizeof(id), "p%06d", i + 1);
    r.subject_id = id;
    const auto& loc = cfg.locations[rng.next_categorical(loc_w.data(), (int)loc_w.size())];
    r.location = loc.name;
    r.enroll_date = cfg.enroll_days[rng.next_categorical(enr_w.data(), (int)enr_w.size())].label;
    r.treat_date = cfg.treat_days[rng.next_categorical(trt_w.data(), (int)trt_w.size())].label;
    r.b_prior = rng.next_beta(cfg.prior_shape_a, cfg.prior_shape_b);
    r.b_ref = rng.next_beta(cfg.ref_shape_a, cfg.ref_shape_b);
    r.z = rng.next_bernoulli(cfg.treat_prob);
    double eps1 = rng.next_normal(), eps2 = rng.next_normal();
    double e = t.sigma_e * eps1;
    double u = t.rho * eps1 + rho_c * eps2;

    int c = derive_condition(r.b_ref, loc.signal);
    double shift;
    if (cfg.psi == "group_theta")
      shift = t.theta[0] + t.theta[1] * r.z + t.theta[2] * c + t.theta[3] * r.z * c;
    else
      shift = r.z * cfg.psi_slope * (loc.signal - r.b_ref);
    double raw_post = r.b_prior + shift + e;
    r.b_post = std::min(1.0, std::max(0.0, raw_post));
    if (r.b_post != raw_post) ++clipped;

    double db = r.b_post - r.b_prior;
    r.a = (t.alpha + t.beta * db + u > 0.0) ? 1 : 0;
    r.raw_outcome_code = r.a ? 1 : 2;
  }

  std::map<std::string, double> signals;
  for (const auto& l : cfg.locations) signals[l.name] = l.signal;
  GenResult out{Dataset(std::move(recs), std::move(signals)), cfg.truth, clipped, {}};
  double rate = double(clipped) / cfg.n;
  if (rate > 0.05)
    out.warnings.push_back("clipped " + std::to_string(clipped) + " of " + std::to_string(cfg.n) +
                           " post-intervention beliefs (" + pct(rate) +
                           "); the additive-noise update leaves [0,1] too often");
  return out;
}

SimConfig preset_paper2019() {
  SimConfig cfg;
  cfg.n = 1510;
  // signals: published first-survey intent shares; shares: final-sample location counts
  cfg.locations = {{"berlin", 0.325, 0.3245},
                   {"hamburg", 0.367, 0.2642},
                   {"munich", 0.367, 0.1854},
                   {"cologne", 0.366, 0.2258}};
  // enrollment/treatment day mixes approximate the survey completion spread
  cfg.enroll_days = {{"2019-08-29", 0.28},
                     {"2019-08-30", 0.26},
                     {"2019-08-31", 0.20},
                     {"2019-09-01", 0.14},
                     {"2019-09-02", 0.12}};
  cfg.treat_days = {{"2019-09-14", 0.22}, {"2019-09-15", 0.21}, {"2019-09-16", 0.19},
                    {"2019-09-17", 0.18}, {"2019-09-19", 0.12}, {"2019-09-20", 0.08}};
  // maximum-likelihood beta seeds of the reported prior and reference belief samples
  cfg.prior_shape_a = 0.9805;
  cfg.prior_shape_b = 2.8988;
  cfg.ref_shape_a = 1.0416;
  cfg.ref_shape_b = 2.0920;
  cfg.treat_prob = 2.0 / 3.0;
  // belief-equation contrasts and latent choice coefficients from the estimated tables
  cfg.truth.theta = {0.0071, 0.0425, -0.0003, -0.0979};
  cfg.truth.alpha = -1.0855;
  cfg.truth.beta = -3.3062;
  cfg.truth.rho = 0.4519;
  cfg.truth.sigma_e = 0.1375;
  cfg.psi = "group_theta";
  cfg.seed = 1;
  return cfg;
}

EquilibriumResult solve_equilibrium(double alpha, double beta, double tol) {
  if (!(tol > 0.0)) throw ValidationError({"tolerance must be positive"});
  if (!std::isfinite(alpha) || !std::isfinite(beta))
    throw ValidationError({"alpha and beta must be finite"});

  auto g = [&](double b) { return std_normal_cdf(alpha + beta * b) - b; };
  // |g'| <= 1 + |beta| phi(0), so an interval this small pins the residual under tol
  const double width = tol / (2.0 + std::abs(beta));

  EquilibriumResult res;
  auto bisect = [&](double lo, double hi) {
    double glo = g(lo);
    while (hi - lo > width) {
      double mid = 0.5 * (lo + hi);
      double gm = g(mid);
      ++res.iterations;
      if ((glo >= 0.0) == (gm >= 0.0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  if (beta == 0.0) {
    res.all_roots.push_back(std_normal_cdf(alpha));
    res.unique = true;
  } else if (beta < 0.0) {
    // strictly decreasing map: g(0) >= 0 >= g(1), single root
    res.all_roots.push_back(bisect(0.0, 1.0));
    res.unique = true;
  } else {
    // g(0) = Phi(alpha) > 0 and g(1) = Phi(alpha+beta) - 1 < 0, so sign changes
    // bracket every transversal fixed point
    const int cells = 4096;
    double prev = g(0.0), prev_x = 0.0;
    for (int k = 1; k <= cells; ++k) {
      double x = double(k) / cells;
      double cur = g(x);
      if ((prev >= 0.0) != (cur >= 0.0)) res.all_roots.push_back(bisect(prev_x, x));
      prev = cur;
      prev_x = x;
    }
    if (res.all_roots.empty()) res.all_roots.push_back(bisect(0.0, 1.0));
    res.unique = res.all_roots.size() == 1;
  }
  res.b_star = res.all_roots.front();
  res.residual = std::abs(g(res.b_star));
  return res;
}

FreeRidingOffset free_riding_offset(double alpha, double alpha_shift, double beta) {
  if (!(beta < 0.0))
    throw EstimationError(
        "free-riding offset is defined for strategic substitutes (beta < 0); "
        "for beta >= 0 examine the full fixed-point set of solve_equilibrium instead");
  if (alpha_shift == 0.0) throw ValidationError({"alpha_shift must be non-zero"});
  auto before = solve_equilibrium(alpha, beta);
  auto after = solve_equilibrium(alpha + alpha_shift, beta);
  FreeRidingOffset out;
  out.naive_response = std_normal_cdf(alpha + alpha_shift + beta * before.b_star) -
                       std_normal_cdf(alpha + beta * before.b_star);
  out.equilibrium_response = after.b_star - before.b_star;
  out.offset_share = 1.0 - out.equilibrium_response / out.naive_response;
  return out;
}

namespace {

ordered_json truth_json(const PlantedTruth& t) {
  ordered_json j;
  j["theta"] = t.theta;
  j["alpha"] = t.alpha;
  j["beta"] = t.beta;
  j["gamma"] = t.gamma;
  j["rho"] = t.rho;
  j["sigma_e"] = t.sigma_e;
  return j;
}

PlantedTruth truth_from(const ordered_json& j) {
  PlantedTruth t;
  auto th = j.at("theta");
  if (!th.is_array() || th.size() != 4)
    throw ValidationError({"truth.theta must be an array of four numbers"});
  for (int i = 0; i < 4; ++i) t.theta[i] = th[i].get<double>();
  t.alpha = j.at("alpha").get<double>();
  t.beta = j.at("beta").get<double>();
  t.gamma = j.value("gamma", std::vector<double>{});
  t.rho = j.at("rho").get<double>();
  t.sigma_e = j.at("sigma_e").get<double>();
  return t;
}

}  // namespace

std::string sim_config_to_json(const SimConfig& cfg) {
  ordered_json j;
  j["n"] = cfg.n;
  j["locations"] = ordered_json::array();
  for (const auto& l : cfg.locations)
    j["locations"].push_back({{"name", l.name}, {"signal", l.signal}, {"share", l.share}});
  j["enroll_days"] = ordered_json::array();
  for (const auto& d : cfg.enroll_days)
    j["enroll_days"].push_back({{"label", d.label}, {"weight", d.weight}});
  j["treat_days"] = ordered_json::array();
  for (const auto& d : cfg.treat_days)
    j["treat_days"].push_back({{"label", d.label}, {"weight", d.weight}});
  j["prior_shapes"] = {cfg.prior_shape_a, cfg.prior_shape_b};
  j["ref_shapes"] = {cfg.ref_shape_a, cfg.ref_shape_b};
  j["treat_prob"] = cfg.treat_prob;
  j["truth"] = truth_json(cfg.truth);
  j["psi"] = cfg.psi;
  j["psi_slope"] = cfg.psi_slope;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

SimConfig sim_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  SimConfig cfg;
  try {
    cfg.n = j.at("n").get<int>();
    cfg.locations.clear();
    for (const auto& l : j.at("locations"))
      cfg.locations.push_back(
          {l.at("name").get<std::string>(), l.at("signal").get<double>(), l.at("share").get<double>()});
    cfg.enroll_days.clear();
    for (const auto& d : j.at("enroll_days"))
      cfg.enroll_days.push_back({d.at("label").get<std::string>(), d.at("weight").get<double>()});
    cfg.treat_days.clear();
    for (const auto& d : j.at("treat_days"))
      cfg.treat_days.push_back({d.at("label").get<std::string>(), d.at("weight").get<double>()});
    cfg.prior_shape_a = j.at("prior_shapes").at(0).get<double>();
    cfg.prior_shape_b = j.at("prior_shapes").at(1).get<double>();
    cfg.ref_shape_a = j.at("ref_shapes").at(0).get<double>();
    cfg.ref_shape_b = j.at("ref_shapes").at(1).get<double>();
    cfg.treat_prob = j.at("treat_prob").get<double>();
    cfg.truth = truth_from(j.at("truth"));
    cfg.psi = j.value("psi", std::string("group_theta"));
    cfg.psi_slope = j.value("psi_slope", 0.5);
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config is missing or mistypes a field: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

std::string truth_to_json(const PlantedTruth& truth) { return truth_json(truth).dump(2) + "\n"; }

PlantedTruth truth_from_json(const std::string& text) {
  try {
    return truth_from(ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("truth sidecar is not valid JSON: ") + e.what());
  }
}

}  // namespace stratpart

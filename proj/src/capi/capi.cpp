#include "stratpart.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "core/csv.hpp"
#include "core/domain.hpp"
#include "core/pipeline.hpp"
#include "core/simulate.hpp"
#include "json.hpp"

using namespace stratpart;
using ordered_json = nlohmann::ordered_json;

struct sp_dataset {
  Dataset ds;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename F>
sp_status guard(F&& body) noexcept {
  try {
    body();
    g_last_error.clear();
    return SP_OK;
  } catch (const ParseError& e) {
    g_last_error = e.what();
    return SP_ERR_PARSE;
  } catch (const ValidationError& e) {
    g_last_error = e.what();
    return SP_ERR_VALIDATION;
  } catch (const EstimationError& e) {
    g_last_error = e.what();
    return SP_ERR_ESTIMATION;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SP_ERR_INTERNAL;
  }
}

sp_status arg_error(const char* message) {
  g_last_error = message;
  return SP_ERR_ARGUMENT;
}

ordered_json parse_options(const char* options_json) {
  if (options_json == nullptr || *options_json == '\0') return ordered_json::object();
  ordered_json j;
  try {
    j = ordered_json::parse(options_json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("options are not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("options must be a JSON object");
  return j;
}

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("option '") + key + "' has the wrong type");
  }
}

EstimateOptions estimate_options(const ordered_json& j) {
  EstimateOptions opt;
  read_field(j, "estimators", opt.estimators);
  read_field(j, "location_fe", opt.location_fe);
  read_field(j, "date_fe", opt.date_fe);
  read_field(j, "belief_fe", opt.belief_fe);
  read_field(j, "grid", opt.grid);
  read_field(j, "bootstrap_reps", opt.bootstrap_reps);
  read_field(j, "cluster_keys", opt.cluster_keys);
  read_field(j, "seed", opt.seed);
  if (j.contains("truth")) opt.truth = truth_from_json(j.at("truth").dump());
  return opt;
}

}  // namespace

extern "C" {

const char* sp_version(void) { return "0.3.0"; }

const char* sp_status_name(sp_status status) {
  switch (status) {
    case SP_OK: return "ok";
    case SP_ERR_ARGUMENT: return "argument_error";
    case SP_ERR_PARSE: return "parse_error";
    case SP_ERR_VALIDATION: return "validation_error";
    case SP_ERR_ESTIMATION: return "estimation_error";
    case SP_ERR_INTERNAL: return "internal_error";
  }
  return "unknown_status";
}

const char* sp_last_error(void) { return g_last_error.c_str(); }

void sp_string_free(char* s) { std::free(s); }

sp_status sp_dataset_read_csv(const char* dataset_path, const char* signals_path,
                              int beliefs_are_percent, sp_dataset** out) {
  if (dataset_path == nullptr || signals_path == nullptr) return arg_error("paths must be non-null");
  if (out == nullptr) return arg_error("out must be non-null");
  *out = nullptr;
  return guard([&] {
    LoadOptions lo;
    lo.beliefs_are_percent = beliefs_are_percent != 0;
    *out = new sp_dataset{load_dataset(dataset_path, signals_path, lo)};
  });
}

sp_status sp_dataset_write_csv(const sp_dataset* ds, const char* dataset_path,
                               const char* signals_path) {
  if (ds == nullptr) return arg_error("dataset must be non-null");
  if (dataset_path == nullptr || signals_path == nullptr) return arg_error("paths must be non-null");
  return guard([&] { write_dataset_csv(ds->ds, dataset_path, signals_path); });
}

sp_status sp_dataset_simulate(const char* config_json, sp_dataset** out, char** truth_json,
                              char** warnings_json) {
  if (config_json == nullptr) return arg_error("config_json must be non-null");
  if (out == nullptr) return arg_error("out must be non-null");
  *out = nullptr;
  if (truth_json) *truth_json = nullptr;
  if (warnings_json) *warnings_json = nullptr;
  return guard([&] {
    auto cfg = sim_config_from_json(config_json);
    auto gen = generate_population(cfg);
    if (truth_json) *truth_json = dup_string(truth_to_json(gen.truth));
    if (warnings_json) {
      ordered_json w = gen.warnings;
      *warnings_json = dup_string(w.dump() + "\n");
    }
    *out = new sp_dataset{std::move(gen.ds)};
  });
}

size_t sp_dataset_n(const sp_dataset* ds) { return ds == nullptr ? 0 : ds->ds.size(); }

sp_status sp_dataset_summary(const sp_dataset* ds, char** summary_json) {
  if (ds == nullptr) return arg_error("dataset must be non-null");
  if (summary_json == nullptr) return arg_error("summary_json must be non-null");
  *summary_json = nullptr;
  return guard([&] {
    auto s = ds->ds.summary();
    ordered_json j;
    j["n"] = s.n;
    j["participation_share"] = s.participation_share;
    j["mean_delta_b"] = s.mean_delta_b;
    j["n_treated"] = s.n_treated;
    j["n_control"] = s.n_control;
    j["n_below"] = s.n_below;
    j["n_above"] = s.n_above;
    j["n_participants"] = s.n_participants;
    j["n_clusters"] = s.n_clusters;
    ordered_json by = ordered_json::object();
    for (const auto& [loc, cnt] : s.by_location) by[loc] = cnt;
    j["by_location"] = by;
    *summary_json = dup_string(j.dump(2) + "\n");
  });
}

void sp_dataset_free(sp_dataset* ds) { delete ds; }

sp_status sp_preset_config(const char* name, char** config_json) {
  if (name == nullptr) return arg_error("name must be non-null");
  if (config_json == nullptr) return arg_error("config_json must be non-null");
  *config_json = nullptr;
  return guard([&] {
    if (std::string(name) != "paper2019")
      throw ValidationError({"unknown preset '" + std::string(name) + "' (available: paper2019)"});
    *config_json = dup_string(sim_config_to_json(preset_paper2019()));
  });
}

sp_status sp_estimate(const sp_dataset* ds, const char* options_json, char** results_json) {
  if (ds == nullptr) return arg_error("dataset must be non-null");
  if (results_json == nullptr) return arg_error("results_json must be non-null");
  *results_json = nullptr;
  return guard([&] {
    auto opt = estimate_options(parse_options(options_json));
    *results_json = dup_string(run_estimate(ds->ds, opt));
  });
}

sp_status sp_margins_curve(const sp_dataset* ds, const char* options_json, char** csv_text) {
  if (ds == nullptr) return arg_error("dataset must be non-null");
  if (csv_text == nullptr) return arg_error("csv_text must be non-null");
  *csv_text = nullptr;
  return guard([&] {
    auto opt = estimate_options(parse_options(options_json));
    *csv_text = dup_string(margins_curve_csv(ds->ds, opt));
  });
}

sp_status sp_test_battery(const sp_dataset* ds, const char* options_json, char** results_json) {
  if (ds == nullptr) return arg_error("dataset must be non-null");
  if (results_json == nullptr) return arg_error("results_json must be non-null");
  *results_json = nullptr;
  return guard([&] {
    auto j = parse_options(options_json);
    TestBatteryOptions opt;
    read_field(j, "treat_prob", opt.treat_prob);
    read_field(j, "late_replications", opt.late_replications);
    read_field(j, "seed", opt.seed);
    read_field(j, "location_fe", opt.location_fe);
    read_field(j, "date_fe", opt.date_fe);
    *results_json = dup_string(run_test_battery(ds->ds, opt));
  });
}

sp_status sp_reproduce(const sp_dataset* ds, const char* options_json, char** report_json,
                       int* all_pass) {
  if (ds == nullptr) return arg_error("dataset must be non-null");
  if (report_json == nullptr) return arg_error("report_json must be non-null");
  *report_json = nullptr;
  if (all_pass) *all_pass = 0;
  return guard([&] {
    auto j = parse_options(options_json);
    ReproduceOptions opt;
    read_field(j, "location_fe", opt.location_fe);
    read_field(j, "date_fe", opt.date_fe);
    if (j.contains("tolerances")) {
      try {
        opt.tolerance_overrides =
            j.at("tolerances").get<std::map<std::string, double>>();
      } catch (const nlohmann::json::exception&) {
        throw ParseError("option 'tolerances' must map target names to numbers");
      }
    }
    auto out = run_reproduce(ds->ds, opt);
    *report_json = dup_string(out.json);
    if (all_pass) *all_pass = out.all_pass ? 1 : 0;
  });
}

sp_status sp_sweep(const char* options_json, char** results_json) {
  if (options_json == nullptr) return arg_error("options_json must be non-null");
  if (results_json == nullptr) return arg_error("results_json must be non-null");
  *results_json = nullptr;
  return guard([&] {
    auto j = parse_options(options_json);
    if (!j.contains("config")) throw ParseError("sweep options need a 'config' object");
    SweepOptions opt;
    opt.config = sim_config_from_json(j.at("config").dump());
    read_field(j, "seeds", opt.seeds);
    read_field(j, "location_fe", opt.location_fe);
    read_field(j, "date_fe", opt.date_fe);
    *results_json = dup_string(run_sweep(opt));
  });
}

sp_status sp_solve_equilibrium(double alpha, double beta, double tol, char** result_json) {
  if (result_json == nullptr) return arg_error("result_json must be non-null");
  *result_json = nullptr;
  return guard([&] {
    auto res = solve_equilibrium(alpha, beta, tol);
    ordered_json j;
    j["b_star"] = res.b_star;
    j["iterations"] = res.iterations;
    j["residual"] = res.residual;
    j["unique"] = res.unique;
    j["all_roots"] = res.all_roots;
    *result_json = dup_string(j.dump(2) + "\n");
  });
}

sp_status sp_free_riding_offset(double alpha, double alpha_shift, double beta,
                                char** result_json) {
  if (result_json == nullptr) return arg_error("result_json must be non-null");
  *result_json = nullptr;
  return guard([&] {
    auto res = free_riding_offset(alpha, alpha_shift, beta);
    ordered_json j;
    j["naive_response"] = res.naive_response;
    j["equilibrium_response"] = res.equilibrium_response;
    j["offset_share"] = res.offset_share;
    *result_json = dup_string(j.dump(2) + "\n");
  });
}

}  // extern "C"

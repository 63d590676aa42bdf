#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stratpart.h"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// exit codes: sp_status values 1..5, plus the two CLI-level conditions below
constexpr int kExitIo = 6;
constexpr int kExitTargetsMissed = 10;

struct CStr {
  char* p = nullptr;
  ~CStr() { sp_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct DsHandle {
  sp_dataset* p = nullptr;
  ~DsHandle() { sp_dataset_free(p); }
};

void print_error(const std::string& status, int code, const std::string& message) {
  ordered_json err;
  err["error"] = {{"status", status}, {"code", code}, {"message", message}};
  std::cerr << err.dump(2) << "\n";
}

int fail_status(sp_status st) {
  print_error(sp_status_name(st), static_cast<int>(st), sp_last_error());
  return static_cast<int>(st);
}

int fail_io(const std::string& message) {
  print_error("io_error", kExitIo, message);
  return kExitIo;
}

bool write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << contents;
  out.flush();
  return out.good();
}

bool read_file(const fs::path& path, std::string& contents) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  contents = buf.str();
  return true;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// colon-separated delta_b values, e.g. "-0.4:-0.2:0:0.2:0.4"
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  for (const auto& piece : split(text, ':')) out.push_back(std::stod(piece));
  return out;
}

// comma-separated seeds with "a..b" ranges, e.g. "1..100" or "1,2,7"
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& piece : split(text, ',')) {
    auto dots = piece.find("..");
    if (dots == std::string::npos) {
      out.push_back(std::stoull(piece));
      continue;
    }
    auto lo = std::stoull(piece.substr(0, dots));
    auto hi = std::stoull(piece.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("--seeds", "range '" + piece + "' is reversed");
    if (hi - lo >= 100000) throw CLI::ValidationError("--seeds", "range '" + piece + "' is huge");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
  return out;
}

// shared input flags for commands that read a dataset
struct InputArgs {
  std::string input, signals;
  bool beliefs_are_percent = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--input", input, "dataset CSV")->required();
    cmd->add_option("--signals", signals, "signals CSV (location,s) or raw intents")->required();
    cmd->add_flag("--beliefs-are-percent", beliefs_are_percent,
                  "belief columns are on the 0-100 scale");
  }

  int load(DsHandle& ds) const {
    auto st = sp_dataset_read_csv(input.c_str(), signals.c_str(), beliefs_are_percent ? 1 : 0,
                                  &ds.p);
    return st == SP_OK ? 0 : fail_status(st);
  }
};

struct FeArgs {
  bool no_location_fe = false, no_date_fe = false, belief_fe = false;

  void attach(CLI::App* cmd) {
    cmd->add_flag("--no-location-fe", no_location_fe, "drop location dummies");
    cmd->add_flag("--no-date-fe", no_date_fe, "drop enrollment/treatment date dummies");
    cmd->add_flag("--belief-fe", belief_fe, "add fixed effects to the belief equation");
  }

  void fill(ordered_json& opts) const {
    opts["location_fe"] = !no_location_fe;
    opts["date_fe"] = !no_date_fe;
    opts["belief_fe"] = belief_fe;
  }
};

int resolve_config(const std::string& preset, const std::string& config_path,
                   ordered_json& config) {
  if (!config_path.empty()) {
    std::string text;
    if (!read_file(config_path, text)) return fail_io("cannot read '" + config_path + "'");
    try {
      config = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      print_error("parse_error", SP_ERR_PARSE, std::string("config file: ") + e.what());
      return SP_ERR_PARSE;
    }
    return 0;
  }
  CStr text;
  auto st = sp_preset_config(preset.c_str(), &text.p);
  if (st != SP_OK) return fail_status(st);
  config = ordered_json::parse(text.str());
  return 0;
}

int ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) return fail_io("cannot create output directory '" + out + "': " + ec.message());
  return 0;
}

int emit(const fs::path& path, const std::string& contents) {
  if (!write_file(path, contents)) return fail_io("cannot write '" + path.string() + "'");
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strategic participation toolkit (simulate, estimate, test, reproduce, sweep)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", []() { return std::string(sp_version()); }());

  // ---- simulate -------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "generate a synthetic population with planted truth");
  std::string sim_preset = "paper2019", sim_config, sim_out;
  std::uint64_t sim_seed = 0;
  std::uint64_t sim_n = 0;
  auto* sim_preset_opt = sim->add_option("--preset", sim_preset, "named calibration (paper2019)");
  sim->add_option("--config", sim_config, "simulation config JSON file")->excludes(sim_preset_opt);
  sim->add_option("--seed", sim_seed, "generator seed")->required();
  sim->add_option("--n", sim_n, "override the population size");
  sim->add_option("--out", sim_out, "output directory")->required();

  // ---- estimate -------------------------------------------------------
  auto* est = app.add_subcommand("estimate", "run the estimator suite on a dataset");
  InputArgs est_in;
  FeArgs est_fe;
  est_in.attach(est);
  est_fe.attach(est);
  std::string est_out, est_estimators, est_cluster_keys = "location,enroll_date,treat_date";
  std::string est_grid = "-0.4:-0.2:0:0.2:0.4", est_truth;
  int est_reps = 1000;
  std::uint64_t est_seed = 0;
  est->add_option("--out", est_out, "output directory")->required();
  est->add_option("--estimators", est_estimators, "comma list (default: all)");
  est->add_option("--bootstrap-reps", est_reps, "bootstrap replications (0 disables)")
      ->capture_default_str();
  est->add_option("--cluster-keys", est_cluster_keys, "cluster bootstrap keys")
      ->capture_default_str();
  est->add_option("--grid", est_grid, "colon-separated delta_b margin grid")->capture_default_str();
  est->add_option("--seed", est_seed, "bootstrap seed");
  est->add_option("--truth", est_truth, "planted-truth JSON sidecar for recovery scoring");

  // ---- test -----------------------------------------------------------
  auto* tst = app.add_subcommand("test", "run the hypothesis-test battery");
  InputArgs tst_in;
  FeArgs tst_fe;
  tst_in.attach(tst);
  tst_fe.attach(tst);
  std::string tst_out;
  int tst_late_reps = 999;
  std::uint64_t tst_seed = 1234;
  double tst_treat_prob = 2.0 / 3.0;
  tst->add_option("--out", tst_out, "output directory")->required();
  tst->add_option("--late-reps", tst_late_reps, "LATE validity bootstrap replications")
      ->capture_default_str();
  tst->add_option("--seed", tst_seed, "test bootstrap seed")->capture_default_str();
  tst->add_option("--treat-prob", tst_treat_prob, "design assignment probability")
      ->capture_default_str();

  // ---- reproduce ------------------------------------------------------
  auto* rep = app.add_subcommand("reproduce", "diff the full pipeline against published targets");
  InputArgs rep_in;
  FeArgs rep_fe;
  rep_in.attach(rep);
  rep_fe.attach(rep);
  std::string rep_out;
  std::vector<std::string> rep_tols;
  rep->add_option("--out", rep_out, "output directory for report.json");
  rep->add_option("--tolerance", rep_tols,
                  "override a target tolerance as name=value (repeatable)");

  // ---- sweep ----------------------------------------------------------
  auto* swp = app.add_subcommand("sweep", "Monte Carlo recovery sweep over seeds");
  std::string swp_preset = "paper2019", swp_config, swp_out, swp_seeds;
  std::uint64_t swp_n = 0;
  FeArgs swp_fe;
  auto* swp_preset_opt = swp->add_option("--preset", swp_preset, "named calibration (paper2019)");
  swp->add_option("--config", swp_config, "simulation config JSON file")->excludes(swp_preset_opt);
  swp->add_option("--seeds", swp_seeds, "comma list with a..b ranges, e.g. 1..100")->required();
  swp->add_option("--n", swp_n, "override the population size");
  swp->add_option("--out", swp_out, "output directory")->required();
  swp_fe.attach(swp);

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    ordered_json config;
    if (int rc = resolve_config(sim_preset, sim_config, config)) return rc;
    config["seed"] = sim_seed;
    if (sim_n > 0) config["n"] = sim_n;
    if (int rc = ensure_out_dir(sim_out)) return rc;

    DsHandle ds;
    CStr truth, warnings;
    auto st = sp_dataset_simulate(config.dump().c_str(), &ds.p, &truth.p, &warnings.p);
    if (st != SP_OK) return fail_status(st);
    for (const auto& w : ordered_json::parse(warnings.str()))
      std::cerr << "warning: " << w.get<std::string>() << "\n";

    fs::path dir(sim_out);
    auto data_path = dir / "dataset.csv";
    auto signals_path = dir / "signals.csv";
    st = sp_dataset_write_csv(ds.p, data_path.string().c_str(), signals_path.string().c_str());
    if (st != SP_OK) return fail_status(st);
    std::cout << "wrote " << data_path.string() << " (" << sp_dataset_n(ds.p) << " records)\n";
    std::cout << "wrote " << signals_path.string() << "\n";
    if (int rc = emit(dir / "truth.json", truth.str())) return rc;
    if (int rc = emit(dir / "config.json", config.dump(2) + "\n")) return rc;
    return 0;
  }

  if (est->parsed()) {
    DsHandle ds;
    if (int rc = est_in.load(ds)) return rc;
    ordered_json opts;
    if (!est_estimators.empty()) opts["estimators"] = split(est_estimators, ',');
    est_fe.fill(opts);
    try {
      opts["grid"] = parse_grid(est_grid);
    } catch (const std::exception&) {
      print_error("parse_error", SP_ERR_PARSE, "cannot parse --grid '" + est_grid + "'");
      return SP_ERR_PARSE;
    }
    opts["bootstrap_reps"] = est_reps;
    opts["cluster_keys"] = split(est_cluster_keys, ',');
    opts["seed"] = est_seed;
    if (!est_truth.empty()) {
      std::string text;
      if (!read_file(est_truth, text)) return fail_io("cannot read '" + est_truth + "'");
      try {
        opts["truth"] = ordered_json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        print_error("parse_error", SP_ERR_PARSE, std::string("truth sidecar: ") + e.what());
        return SP_ERR_PARSE;
      }
    }
    if (int rc = ensure_out_dir(est_out)) return rc;

    CStr results, curve;
    auto st = sp_estimate(ds.p, opts.dump().c_str(), &results.p);
    if (st != SP_OK) return fail_status(st);
    st = sp_margins_curve(ds.p, opts.dump().c_str(), &curve.p);
    if (st != SP_OK) return fail_status(st);
    fs::path dir(est_out);
    if (int rc = emit(dir / "results.json", results.str())) return rc;
    if (int rc = emit(dir / "margins_curve.csv", curve.str())) return rc;
    return 0;
  }

  if (tst->parsed()) {
    DsHandle ds;
    if (int rc = tst_in.load(ds)) return rc;
    ordered_json opts;
    opts["treat_prob"] = tst_treat_prob;
    opts["late_replications"] = tst_late_reps;
    opts["seed"] = tst_seed;
    tst_fe.fill(opts);
    if (int rc = ensure_out_dir(tst_out)) return rc;

    CStr results;
    auto st = sp_test_battery(ds.p, opts.dump().c_str(), &results.p);
    if (st != SP_OK) return fail_status(st);
    return emit(fs::path(tst_out) / "tests.json", results.str());
  }

  if (rep->parsed()) {
    DsHandle ds;
    if (int rc = rep_in.load(ds)) return rc;
    ordered_json opts;
    rep_fe.fill(opts);
    if (!rep_tols.empty()) {
      ordered_json tols = ordered_json::object();
      for (const auto& item : rep_tols) {
        auto eq = item.find('=');
        if (eq == std::string::npos) {
          print_error("parse_error", SP_ERR_PARSE,
                      "--tolerance expects name=value, got '" + item + "'");
          return SP_ERR_PARSE;
        }
        try {
          tols[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
          print_error("parse_error", SP_ERR_PARSE, "cannot parse tolerance '" + item + "'");
          return SP_ERR_PARSE;
        }
      }
      opts["tolerances"] = tols;
    }

    CStr report;
    int all_pass = 0;
    auto st = sp_reproduce(ds.p, opts.dump().c_str(), &report.p, &all_pass);
    if (st != SP_OK) return fail_status(st);
    auto parsed = ordered_json::parse(report.str());
    for (const auto& row : parsed["targets"]) {
      std::cout << (row["pass"].get<bool>() ? "[ok]   " : "[MISS] ") << row["name"].get<std::string>()
                << " estimate=" << row["estimate"].dump() << " target=" << row["target"].dump()
                << " tolerance=" << row["tolerance"].dump() << "\n";
    }
    if (!rep_out.empty()) {
      if (int rc = ensure_out_dir(rep_out)) return rc;
      if (int rc = emit(fs::path(rep_out) / "report.json", report.str())) return rc;
    }
    if (!all_pass) {
      std::cout << "reproduction targets missed\n";
      return kExitTargetsMissed;
    }
    std::cout << "all reproduction targets matched\n";
    return 0;
  }

  // sweep
  ordered_json config;
  if (int rc = resolve_config(swp_preset, swp_config, config)) return rc;
  if (swp_n > 0) config["n"] = swp_n;
  ordered_json opts;
  opts["config"] = config;
  try {
    opts["seeds"] = parse_seeds(swp_seeds);
  } catch (const CLI::Error& e) {
    print_error("parse_error", SP_ERR_PARSE, e.what());
    return SP_ERR_PARSE;
  } catch (const std::exception&) {
    print_error("parse_error", SP_ERR_PARSE, "cannot parse --seeds '" + swp_seeds + "'");
    return SP_ERR_PARSE;
  }
  swp_fe.fill(opts);
  if (int rc = ensure_out_dir(swp_out)) return rc;

  CStr results;
  auto st = sp_sweep(opts.dump().c_str(), &results.p);
  if (st != SP_OK) return fail_status(st);
  auto parsed = ordered_json::parse(results.str());
  const auto& summary = parsed["summary"];
  if (summary.contains("coverage_rate"))
    std::cout << "coverage " << summary["coverage_rate"].dump() << ", naive probit biased share "
              << summary["probit_biased_share"].dump() << "\n";
  return emit(fs::path(swp_out) / "sweep.json", results.str());
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("stratpart_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// runs the built CLI (path from the environment) with shell-style arguments
RunResult run_cli(const std::string& args, const fs::path& dir) {
  const char* cli = std::getenv("STRATPART_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "STRATPART_CLI must point at the built binary");
  auto out_path = dir / "stdout.txt";
  auto err_path = dir / "stderr.txt";
  std::string cmd = std::string("\"") + cli + "\" " + args + " > \"" + out_path.string() +
                    "\" 2> \"" + err_path.string() + "\"";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += (c == '\n');
  return n;
}

// one simulated panel shared by the consuming test cases
const fs::path& sim_dir() {
  static fs::path dir = [] {
    auto base = scratch("shared_sim");
    auto r = run_cli("simulate --preset paper2019 --seed 1 --out \"" +
                         (base / "sim").string() + "\"",
                     base);
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    return base / "sim";
  }();
  return dir;
}

std::string input_args() {
  return "--input \"" + (sim_dir() / "dataset.csv").string() + "\" --signals \"" +
         (sim_dir() / "signals.csv").string() + "\"";
}

}  // namespace

TEST_CASE("simulate writes a loadable dataset with its planted sidecar") {
  auto dir = scratch("simulate");
  auto out1 = dir / "a";
  auto r = run_cli("simulate --preset paper2019 --seed 1 --out \"" + out1.string() + "\"", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("1510 records") != std::string::npos);
  CHECK(r.err.find("clipped") != std::string::npos);  // preset clips > 5% of posts

  auto csv = slurp(out1 / "dataset.csv");
  CHECK(line_count(csv) == 1511);  // header + one row per subject
  CHECK(csv.rfind("subject_id,location,", 0) == 0);
  CHECK(line_count(slurp(out1 / "signals.csv")) == 5);

  auto truth = ordered_json::parse(slurp(out1 / "truth.json"));
  CHECK(truth["beta"].get<double>() == doctest::Approx(-3.3062));
  CHECK(truth["theta"][1].get<double>() == doctest::Approx(0.0425));
  auto config = ordered_json::parse(slurp(out1 / "config.json"));
  CHECK(config["seed"] == 1);

  // byte-identical regeneration across processes
  auto out2 = dir / "b";
  r = run_cli("simulate --preset paper2019 --seed 1 --out \"" + out2.string() + "\"", dir);
  CHECK(r.exit_code == 0);
  CHECK(slurp(out2 / "dataset.csv") == csv);
  CHECK(slurp(out2 / "truth.json") == slurp(out1 / "truth.json"));

  // a different seed moves the data
  auto out3 = dir / "c";
  r = run_cli("simulate --preset paper2019 --seed 2 --out \"" + out3.string() + "\"", dir);
  CHECK(r.exit_code == 0);
  CHECK(slurp(out3 / "dataset.csv") != csv);
  fs::remove_all(dir);
}

TEST_CASE("estimate emits labeled results and a margins curve") {
  auto dir = scratch("estimate");
  std::string flags = " --estimators ols,probit,cf_joint_mle --bootstrap-reps 20 --seed 5 "
                      "--truth \"" +
                      (sim_dir() / "truth.json").string() + "\"";
  auto out1 = dir / "a";
  auto r = run_cli("estimate " + input_args() + flags + " --out \"" + out1.string() + "\"", dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);

  auto results = ordered_json::parse(slurp(out1 / "results.json"));
  CHECK(results["belief_models"].size() == 1);
  CHECK(results["participation_models"].size() == 2);
  const auto& beta = results["participation_models"]["cf_joint_mle"]["beta"];
  CHECK(beta["se"].contains("standard"));
  CHECK(beta["se"].contains("bootstrap"));
  CHECK(beta["se"].contains("cluster_bootstrap"));
  CHECK(results["recovery"].contains("beta"));

  auto curve = slurp(out1 / "margins_curve.csv");
  CHECK(curve.rfind("delta_b,margin,se,ci_lower,ci_upper\n", 0) == 0);
  CHECK(line_count(curve) == 82);

  // identical invocation, identical bytes
  auto out2 = dir / "b";
  r = run_cli("estimate " + input_args() + flags + " --out \"" + out2.string() + "\"", dir);
  CHECK(r.exit_code == 0);
  CHECK(slurp(out2 / "results.json") == slurp(out1 / "results.json"));
  CHECK(slurp(out2 / "margins_curve.csv") == curve);
  fs::remove_all(dir);
}

TEST_CASE("reproduce reports target misses with a dedicated exit code") {
  auto dir = scratch("reproduce");
  auto r = run_cli("reproduce " + input_args() + " --out \"" + (dir / "rep").string() + "\"", dir);
  CHECK(r.exit_code == 10);  // synthetic data sits near, not on, the published numbers
  CHECK(r.out.find("[MISS]") != std::string::npos);
  CHECK(r.out.find("reproduction targets missed") != std::string::npos);
  auto report = ordered_json::parse(slurp(dir / "rep" / "report.json"));
  CHECK(report["targets"].size() == 6);
  CHECK(report["all_pass"] == false);

  std::string loose;
  for (const char* t : {"beta_cf_mle=10", "ape_overall=10", "ate_below=1", "ate_above=1",
                        "margin_overall=1", "exogeneity_chi2=50"})
    loose += std::string(" --tolerance ") + t;
  r = run_cli("reproduce " + input_args() + loose, dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("all reproduction targets matched") != std::string::npos);

  r = run_cli("reproduce " + input_args() + " --tolerance beta_cf_mle=abc", dir);
  CHECK(r.exit_code == 2);
  fs::remove_all(dir);
}

TEST_CASE("test battery and sweep write their artifacts") {
  auto dir = scratch("battery_sweep");
  auto r = run_cli("test " + input_args() + " --late-reps 49 --out \"" + (dir / "t").string() +
                       "\"",
                   dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  auto battery = ordered_json::parse(slurp(dir / "t" / "tests.json"));
  CHECK(battery["tests"].size() == 12);
  CHECK(battery["distribution_fits"].contains("prior_belief"));

  r = run_cli("sweep --seeds 1..2 --out \"" + (dir / "s").string() + "\"", dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(r.out.find("coverage") != std::string::npos);
  auto sweep = ordered_json::parse(slurp(dir / "s" / "sweep.json"));
  CHECK(sweep["rows"].size() == 2);

  r = run_cli("sweep --seeds 5..1 --out \"" + (dir / "s2").string() + "\"", dir);
  CHECK(r.exit_code == 2);
  fs::remove_all(dir);
}

TEST_CASE("usage and domain errors exit nonzero with machine-readable reports") {
  auto dir = scratch("errors");

  auto r = run_cli("reproduce", dir);  // no --input
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("--input") != std::string::npos);

  r = run_cli("estimate " + input_args() + " --out \"" + (dir / "x").string() +
                  "\" --estimators magic",
              dir);
  CHECK(r.exit_code == 3);
  auto err = ordered_json::parse(r.err);
  CHECK(err["error"]["status"] == "validation_error");
  CHECK(err["error"]["message"].get<std::string>().find("magic") != std::string::npos);

  r = run_cli("estimate --input missing.csv --signals missing2.csv --out \"" +
                  (dir / "y").string() + "\"",
              dir);
  CHECK(r.exit_code == 2);
  CHECK(ordered_json::parse(r.err)["error"]["status"] == "parse_error");

  r = run_cli("simulate --preset paper2024 --seed 1 --out \"" + (dir / "z").string() + "\"", dir);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("unknown preset") != std::string::npos);

  r = run_cli("simulate --preset paper2019 --config also.json --seed 1 --out \"" +
                  (dir / "w").string() + "\"",
              dir);
  CHECK(r.exit_code != 0);  // mutually exclusive sources

  r = run_cli("--version", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("0.3.0") != std::string::npos);
  fs::remove_all(dir);
}

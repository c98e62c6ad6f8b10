#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "podreach/config.hpp"
#include "podreach/errors.hpp"
#include "podreach/hsmodel.hpp"
#include "podreach/pbvi.hpp"

using namespace podreach;
using doctest::Approx;
using doctest::Contains;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
  REQUIRE(bool(os));
}

const fs::path& work_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() /
                 ("podreach_cli_" + std::to_string(static_cast<long>(::getpid())));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = work_root() / name;
  fs::create_directories(p);
  return p;
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_f = dir / "stdout.txt";
  const fs::path err_f = dir / "stderr.txt";
  const std::string cmd = std::string(PODREACH_CLI_PATH) + " " + args + " >" +
                          out_f.string() + " 2>" + err_f.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_f);
  r.err = slurp(err_f);
  return r;
}

// small solve config: seconds instead of minutes
std::string tiny_config(int horizon, std::uint64_t seed, const std::string& extra = "") {
  std::ostringstream ss;
  ss << "{\"schema_version\":1,"
     << "\"solver\":{\"horizon\":" << horizon
     << ",\"belief_count\":12,\"reduce_to\":10,\"seed\":" << seed << "}"
     << (extra.empty() ? "" : ",") << extra << "}";
  return ss.str();
}

// one shared solve; config and artifacts live in base/
struct BaseRun {
  fs::path dir;
  fs::path config;
  fs::path policy;
  fs::path report;
};

const BaseRun& base() {
  static const BaseRun b = [] {
    BaseRun out;
    out.dir = fresh_dir("base");
    out.config = out.dir / "config.json";
    spit(out.config, tiny_config(3, 2112));
    const auto r = run_cli("solve --config " + out.config.string() + " --out " +
                               out.dir.string() + " --threads 1",
                           out.dir);
    REQUIRE(r.code == 0);
    out.policy = out.dir / "policy.json";
    out.report = out.dir / "solve_report.json";
    REQUIRE(fs::exists(out.policy));
    REQUIRE(fs::exists(out.report));
    return out;
  }();
  return b;
}

}  // namespace

TEST_CASE("config defaults match the benchmark run") {
  const auto cfg = config::parse_config("{\"schema_version\":1}", "mem");
  CHECK(cfg.model.builtin == "thermostat");
  CHECK(cfg.model.file.empty());
  CHECK(cfg.solver.horizon == 20);
  CHECK(cfg.solver.belief_count == 40);
  CHECK(cfg.solver.reduce_to == 20);
  CHECK(cfg.solver.indicator_components == 0);
  CHECK(cfg.solver.sample_horizon == 0);
  CHECK(cfg.solver.seed == config::kDefaultSeed);
  CHECK(cfg.sweep.mu0_grid == std::vector<double>{18.2, 18.6, 19.0, 19.4, 19.8, 20.2, 20.6,
                                                  21.0});
  CHECK(cfg.sweep.n_runs == 200);
  CHECK_FALSE(cfg.sweep.stationary);
  CHECK_FALSE(cfg.inspect.present);
  CHECK(cfg.output_dir == ".");
}

TEST_CASE("config schema is strict") {
  auto parse = [](const std::string& text) { return config::parse_config(text, "mem"); };
  CHECK_THROWS_WITH_AS(parse("{]"), Contains("not valid JSON"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("[]"), Contains("$ must be an object"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{}"), Contains("$.schema_version is required"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":2}"), Contains("must be 1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"solvr\":{}}"),
                       Contains("$.solvr unknown key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"solver\":{\"horizzon\":3}}"),
                       Contains("$.solver.horizzon unknown key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"solver\":{\"horizon\":0}}"),
                       Contains("$.solver.horizon must be >= 1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"solver\":{\"belief_count\":0}}"),
                       Contains("$.solver.belief_count must be positive"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"solver\":{\"seed\":-4}}"),
                       Contains("$.solver.seed"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"sweep\":{\"mu0_grid\":[]}}"),
                       Contains("non-empty array"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"sweep\":{\"mu0_grid\":[19,18]}}"),
                       Contains("strictly increasing"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"sweep\":{\"mode\":\"sometimes\"}}"),
                       Contains("$.sweep.mode"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse("{\"schema_version\":1,\"model\":{\"builtin\":\"fridge\"}}"),
      Contains("unknown builtin model"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse("{\"schema_version\":1,\"model\":{\"builtin\":\"thermostat\",\"file\":\"x\"}}"),
      Contains("builtin or file, not both"), ConfigError);
  CHECK_THROWS_WITH_AS(parse("{\"schema_version\":1,\"inspect\":{\"s2\":0.1}}"),
                       Contains("$.inspect.mu0 is required"), ConfigError);
}

TEST_CASE("config hash is canonical over formatting and sensitive to content") {
  const auto a = config::parse_config("{\"schema_version\":1}", "mem");
  const auto b = config::parse_config("{ \"schema_version\" : 1 , \"solver\" : {} }", "mem");
  CHECK(config::config_hash(a) == config::config_hash(b));
  CHECK(config::config_hash(a).size() == 16);
  const auto c =
      config::parse_config("{\"schema_version\":1,\"solver\":{\"seed\":417}}", "mem");
  CHECK(config::config_hash(a) != config::config_hash(c));
  CHECK(config::config_to_json(a) == config::config_to_json(b));
}

TEST_CASE("build_model honors the model source and indicator override") {
  const auto base_cfg = config::parse_config("{\"schema_version\":1}", "mem");
  const auto builtin = config::build_model(base_cfg);
  const std::string builtin_hash = hsmodel::model_hash(builtin);

  const fs::path dir = fresh_dir("model_file");
  const fs::path model_file = dir / "model.json";
  spit(model_file, hsmodel::model_to_json(builtin));
  const auto file_cfg = config::parse_config(
      "{\"schema_version\":1,\"model\":{\"file\":\"" + model_file.string() + "\"}}", "mem");
  CHECK(hsmodel::model_hash(config::build_model(file_cfg)) == builtin_hash);

  const auto override_cfg = config::parse_config(
      "{\"schema_version\":1,\"solver\":{\"indicator_components\":12}}", "mem");
  const auto overridden = config::build_model(override_cfg);
  CHECK(overridden.indicator.mixture.mode(0).size() == 12);
  CHECK(hsmodel::model_hash(overridden) != builtin_hash);

  // too few components to clear the fit's own residual gate
  const auto starved_cfg = config::parse_config(
      "{\"schema_version\":1,\"solver\":{\"indicator_components\":6}}", "mem");
  CHECK_THROWS_WITH_AS(config::build_model(starved_cfg), Contains("residual"), NumericError);

  const auto missing_cfg = config::parse_config(
      "{\"schema_version\":1,\"model\":{\"file\":\"/nonexistent/model.json\"}}", "mem");
  CHECK_THROWS_WITH_AS(config::build_model(missing_cfg),
                       Contains("/nonexistent/model.json"), ConfigError);
}

TEST_CASE("solve writes a policy and a report") {
  const auto& b = base();
  const auto stack = pbvi::load_policy_file(b.policy.string());
  CHECK(stack.horizon == 3);
  CHECK(stack.belief_count == 12);
  CHECK(stack.reduce_to == 10);
  CHECK(stack.seed == 2112);

  const auto report = nlohmann::json::parse(slurp(b.report));
  CHECK(report.at("seed").get<std::uint64_t>() == 2112);
  CHECK(report.at("gamma_sizes").size() == 4);
  CHECK(report.at("gamma_sizes").back().get<int>() == 1);
  CHECK(report.at("wall_time_s").get<double>() > 0.0);
  CHECK(report.at("delta_diagnostic").get<double>() >= 0.0);
  CHECK(report.at("model_hash").get<std::string>().size() == 16);
  CHECK(report.at("model_hash").get<std::string>() ==
        hsmodel::model_hash(config::build_model(config::parse_config(tiny_config(3, 2112),
                                                                     "mem"))));
  CHECK(report.at("policy_file").get<std::string>() == b.policy.string());
}

TEST_CASE("repeated seeded solves are byte-identical") {
  const auto& b = base();
  const fs::path dir = fresh_dir("again");
  const fs::path cfg = dir / "config.json";
  spit(cfg, tiny_config(3, 2112));
  const auto r = run_cli("solve --config " + cfg.string() + " --out " + dir.string() +
                             " --threads 2",
                         dir);
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "policy.json") == slurp(b.policy));
}

TEST_CASE("the seed flag overrides the config and changes the artifact") {
  const auto& b = base();
  const fs::path dir = fresh_dir("seed_flag");
  const auto r = run_cli("solve --config " + b.config.string() + " --out " + dir.string() +
                             " --seed 31337 --threads 1",
                         dir);
  REQUIRE(r.code == 0);
  const auto stack = pbvi::load_policy_file((dir / "policy.json").string());
  CHECK(stack.seed == 31337);
  CHECK(slurp(dir / "policy.json") != slurp(b.policy));
}

TEST_CASE("config problems exit with code 2 and name the cause") {
  const fs::path dir = fresh_dir("bad_config");

  auto r = run_cli("solve --config " + (dir / "absent.json").string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("absent.json") != std::string::npos);

  const fs::path bad_key = dir / "bad_key.json";
  spit(bad_key, "{\"schema_version\":1,\"solver\":{\"horizzon\":3}}");
  r = run_cli("solve --config " + bad_key.string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("$.solver.horizzon unknown key") != std::string::npos);

  const fs::path bad_model = dir / "bad_model.json";
  spit(bad_model,
       "{\"schema_version\":1,\"model\":{\"file\":\"" + (dir / "ghost.json").string() +
           "\"}}");
  r = run_cli("solve --config " + bad_model.string() + " --out " + dir.string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("ghost.json") != std::string::npos);

  r = run_cli("solve", dir);
  CHECK(r.code == 2);
  r = run_cli("frobnicate --config " + bad_key.string(), dir);
  CHECK(r.code == 2);
}

TEST_CASE("sweep writes one csv row per grid point") {
  const auto& b = base();
  const fs::path dir = fresh_dir("sweep");
  const fs::path cfg = dir / "config.json";
  spit(cfg, tiny_config(3, 2112,
                        "\"sweep\":{\"mu0_grid\":[18.5,19.75,21.0],\"n_runs\":20}"));
  const auto r = run_cli("sweep --config " + cfg.string() + " --policy " +
                             b.policy.string() + " --out " + dir.string() + " --threads 1",
                         dir);
  REQUIRE(r.code == 0);

  fs::path csv;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csv = e.path();
  REQUIRE(!csv.empty());
  CHECK(csv.filename().string().rfind("sweep_T3_", 0) == 0);

  const std::string text = slurp(csv);
  std::size_t lines = 0;
  for (std::size_t at = text.find("\r\n"); at != std::string::npos;
       at = text.find("\r\n", at + 2))
    ++lines;
  CHECK(lines == 4);
  CHECK(text.rfind("mu0,V_pbvi,mc_estimate,mc_stderr,u0\r\n", 0) == 0);

  // identical seed, identical bytes
  const fs::path dir2 = fresh_dir("sweep_again");
  const auto r2 = run_cli("sweep --config " + cfg.string() + " --policy " +
                              b.policy.string() + " --out " + dir2.string() + " --threads 2",
                          dir2);
  REQUIRE(r2.code == 0);
  fs::path csv2;
  for (const auto& e : fs::directory_iterator(dir2))
    if (e.path().extension() == ".csv") csv2 = e.path();
  REQUIRE(!csv2.empty());
  CHECK(slurp(csv2) == text);
}

TEST_CASE("a one-point grid yields a one-row sweep") {
  const auto& b = base();
  const fs::path dir = fresh_dir("sweep_one");
  const fs::path cfg = dir / "config.json";
  spit(cfg, tiny_config(3, 2112, "\"sweep\":{\"mu0_grid\":[19.75],\"n_runs\":10}"));
  const auto r = run_cli("sweep --config " + cfg.string() + " --policy " +
                             b.policy.string() + " --out " + dir.string(),
                         dir);
  REQUIRE(r.code == 0);
  fs::path csv;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csv = e.path();
  REQUIRE(!csv.empty());
  const std::string text = slurp(csv);
  std::size_t lines = 0;
  for (std::size_t at = text.find("\r\n"); at != std::string::npos;
       at = text.find("\r\n", at + 2))
    ++lines;
  CHECK(lines == 2);
}

TEST_CASE("horizon mismatch between policy and config exits with code 4") {
  const auto& b = base();
  const fs::path dir = fresh_dir("mismatch_T");
  const fs::path cfg = dir / "config.json";
  spit(cfg, tiny_config(4, 2112, "\"sweep\":{\"mu0_grid\":[19.75],\"n_runs\":10}"));
  const auto r = run_cli("sweep --config " + cfg.string() + " --policy " +
                             b.policy.string() + " --out " + dir.string(),
                         dir);
  CHECK(r.code == 4);
  CHECK(r.err.find("horizon") != std::string::npos);
}

TEST_CASE("model mismatch between policy and config exits with code 4") {
  const auto& b = base();
  const fs::path dir = fresh_dir("mismatch_model");
  const auto model = config::build_model(config::parse_config("{\"schema_version\":1}",
                                                              "mem"));
  std::string mj = hsmodel::model_to_json(model);
  const std::string find = "\"shrink\":0.998";
  const auto at = mj.find(find);
  REQUIRE(at != std::string::npos);
  mj.replace(at, find.size(), "\"shrink\":0.99");
  const fs::path model_file = dir / "model.json";
  spit(model_file, mj);

  const fs::path cfg = dir / "config.json";
  spit(cfg, "{\"schema_version\":1,\"model\":{\"file\":\"" + model_file.string() +
                "\"},\"solver\":{\"horizon\":3,\"belief_count\":12,\"reduce_to\":10,"
                "\"seed\":2112},\"sweep\":{\"mu0_grid\":[19.75],\"n_runs\":10}}");
  const auto r = run_cli("sweep --config " + cfg.string() + " --policy " +
                             b.policy.string() + " --out " + dir.string(),
                         dir);
  CHECK(r.code == 4);
  CHECK(r.err.find("solved for model") != std::string::npos);
}

TEST_CASE("corrupt policy artifacts exit with code 5") {
  const auto& b = base();
  const fs::path dir = fresh_dir("corrupt");
  const fs::path mangled = dir / "policy.json";
  spit(mangled, "{]");
  const fs::path cfg = dir / "config.json";
  spit(cfg, tiny_config(3, 2112, "\"inspect\":{\"mu0\":19.75}"));
  auto r = run_cli("inspect --config " + cfg.string() + " --policy " + mangled.string(), dir);
  CHECK(r.code == 5);
  CHECK(r.err.find("corrupt artifact") != std::string::npos);

  r = run_cli("inspect --config " + cfg.string() + " --policy " +
                  (dir / "ghost_policy.json").string(),
              dir);
  CHECK(r.code == 5);

  // well-formed JSON that fails artifact validation
  const fs::path truncated = dir / "truncated.json";
  std::string pj = slurp(b.policy);
  const std::string find = "\"horizon\":3";
  const auto at = pj.find(find);
  REQUIRE(at != std::string::npos);
  pj.replace(at, find.size(), "\"horizon\":4");
  spit(truncated, pj);
  r = run_cli("inspect --config " + cfg.string() + " --policy " + truncated.string(), dir);
  CHECK(r.code == 5);
}

TEST_CASE("inspect reports the heating threshold behavior") {
  const auto& b = base();
  const fs::path dir = fresh_dir("inspect");

  auto ask = [&](double mu0) {
    const fs::path cfg = dir / "config.json";
    std::ostringstream ss;
    ss << "\"inspect\":{\"mu0\":" << mu0 << ",\"s2\":0.1,\"q0\":0,\"stage\":0}";
    spit(cfg, tiny_config(3, 2112, ss.str()));
    const auto r =
        run_cli("inspect --config " + cfg.string() + " --policy " + b.policy.string(), dir);
    REQUIRE(r.code == 0);
    return nlohmann::json::parse(r.out);
  };

  const auto cool = ask(18.0);
  CHECK(cool.at("action").get<int>() == 1);
  const auto warm = ask(21.0);
  CHECK(warm.at("action").get<int>() == 0);
  for (const auto& j : {cool, warm}) {
    CHECK(j.at("value").get<double>() >= 0.0);
    CHECK(j.at("value").get<double>() <= 1.0);
    CHECK(j.at("raw").is_number());
  }
}

TEST_CASE("inspect validates its inputs") {
  const auto& b = base();
  const fs::path dir = fresh_dir("inspect_bad");

  const fs::path no_inspect = dir / "no_inspect.json";
  spit(no_inspect, tiny_config(3, 2112));
  auto r = run_cli("inspect --config " + no_inspect.string() + " --policy " +
                       b.policy.string(),
                   dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("$.inspect is required") != std::string::npos);

  const fs::path deep_stage = dir / "deep_stage.json";
  spit(deep_stage, tiny_config(3, 2112, "\"inspect\":{\"mu0\":19.75,\"stage\":7}"));
  r = run_cli("inspect --config " + deep_stage.string() + " --policy " + b.policy.string(),
              dir);
  CHECK(r.code == 4);
  CHECK(r.err.find("stage") != std::string::npos);

  const fs::path bad_q = dir / "bad_q.json";
  spit(bad_q, tiny_config(3, 2112, "\"inspect\":{\"mu0\":19.75,\"q0\":5}"));
  r = run_cli("inspect --config " + bad_q.string() + " --policy " + b.policy.string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("q0") != std::string::npos);
}

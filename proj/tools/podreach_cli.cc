#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "podreach/config.hpp"
#include "podreach/pbvi.hpp"
#include "podreach/rng.hpp"
#include "podreach/simkit.hpp"

namespace {

using podreach::ConfigError;
using podreach::DataError;
using podreach::MismatchError;
using podreach::NumericError;
namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::string policy_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

podreach::config::RunConfig load(const Options& opt) {
  auto cfg = podreach::config::load_config_file(opt.config_path);
  if (opt.seed_set) cfg.solver.seed = opt.seed;
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  return cfg;
}

int effective_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::string default_policy_path(const podreach::config::RunConfig& cfg) {
  return (fs::path(cfg.output_dir) / "policy.json").string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path + ": cannot open for writing");
  os << text;
  if (!os) throw DataError(path + ": write failed");
}

int cmd_solve(const Options& opt) {
  const auto cfg = load(opt);
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = podreach::config::build_model(cfg);
  const int T = cfg.solver.horizon;
  const int sample_h = cfg.solver.sample_horizon > 0 ? cfg.solver.sample_horizon : T;
  const int threads = effective_threads(opt.threads);

  auto beliefs = podreach::pbvi::sample_belief_set(model, cfg.solver.belief_count, sample_h,
                                                   cfg.solver.seed, cfg.solver.reduce_to);
  auto stack = podreach::pbvi::solve(model, beliefs, T, cfg.solver.reduce_to, threads);
  stack.seed = cfg.solver.seed;

  fs::create_directories(cfg.output_dir);
  const std::string policy_file =
      opt.policy_path.empty() ? default_policy_path(cfg) : opt.policy_path;
  podreach::pbvi::save_policy_file(stack, policy_file);

  // coverage diagnostic against a freshly sampled probe set
  const auto probes = podreach::pbvi::sample_belief_set(
      model, 8, sample_h, podreach::splitmix64(cfg.solver.seed ^ 0x70726f6265ull),
      cfg.solver.reduce_to);
  const double delta = podreach::pbvi::delta_diagnostic(beliefs, probes);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json report;
  report["config_hash"] = podreach::config::config_hash(cfg);
  report["delta_diagnostic"] = delta;
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& gamma : stack.gammas) sizes.push_back(gamma.size());
  report["gamma_sizes"] = std::move(sizes);
  report["model_hash"] = stack.model_hash;
  report["policy_file"] = policy_file;
  report["seed"] = cfg.solver.seed;
  report["threads"] = threads;
  report["wall_time_s"] = wall;
  const std::string report_file = (fs::path(cfg.output_dir) / "solve_report.json").string();
  write_text_file(report_file, report.dump(2) + "\n");

  std::cout << "policy: " << policy_file << "\n"
            << "report: " << report_file << "\n";
  return 0;
}

int cmd_sweep(const Options& opt) {
  const auto cfg = load(opt);
  const auto model = podreach::config::build_model(cfg);
  const std::string policy_file =
      opt.policy_path.empty() ? default_policy_path(cfg) : opt.policy_path;
  const auto stack = podreach::pbvi::load_policy_file(policy_file);

  const std::string hash = podreach::hsmodel::model_hash(model);
  if (stack.model_hash != hash)
    throw MismatchError(policy_file + ": policy was solved for model " + stack.model_hash +
                        ", config builds " + hash);
  if (stack.horizon != cfg.solver.horizon)
    throw MismatchError(policy_file + ": policy horizon " + std::to_string(stack.horizon) +
                        " does not match configured horizon " +
                        std::to_string(cfg.solver.horizon));

  const auto mode = cfg.sweep.stationary ? podreach::simkit::PolicyMode::kStationary
                                         : podreach::simkit::PolicyMode::kTimeVarying;
  const auto rows =
      podreach::simkit::sweep_mu0(model, stack, cfg.sweep.mu0_grid, cfg.solver.horizon,
                                  cfg.sweep.n_runs, cfg.solver.seed, mode,
                                  effective_threads(opt.threads));

  fs::create_directories(cfg.output_dir);
  const std::string csv_name = "sweep_T" + std::to_string(cfg.solver.horizon) + "_" +
                               podreach::config::config_hash(cfg).substr(0, 8) + ".csv";
  const std::string csv_file = (fs::path(cfg.output_dir) / csv_name).string();
  std::ofstream os(csv_file, std::ios::binary);
  if (!os) throw DataError(csv_file + ": cannot open for writing");
  podreach::simkit::write_sweep_csv(os, rows);
  if (!os) throw DataError(csv_file + ": write failed");

  std::cout << "sweep: " << csv_file << "\n";
  return 0;
}

int cmd_inspect(const Options& opt) {
  const auto cfg = load(opt);
  if (!cfg.inspect.present)
    throw ConfigError(opt.config_path + ": $.inspect is required for inspect");
  const std::string policy_file =
      opt.policy_path.empty() ? default_policy_path(cfg) : opt.policy_path;
  const auto stack = podreach::pbvi::load_policy_file(policy_file);
  if (cfg.inspect.stage > stack.horizon)
    throw MismatchError(policy_file + ": stage " + std::to_string(cfg.inspect.stage) +
                        " exceeds policy horizon " + std::to_string(stack.horizon));

  const int n_modes = stack.gammas.front().front().mixture.n_modes();
  if (cfg.inspect.q0 >= n_modes)
    throw ConfigError(opt.config_path + ": $.inspect.q0 out of range for this policy");
  podreach::belief::SufficientStatistic sigma;
  sigma.mixture = podreach::gmix::HybridMixture(n_modes, 1);
  sigma.mixture.mode(cfg.inspect.q0).add1(1.0, cfg.inspect.mu0, cfg.inspect.s2);
  sigma.time_index = cfg.inspect.stage;

  const auto vr = podreach::pbvi::value(stack, sigma, cfg.inspect.stage);
  nlohmann::json out;
  out["action"] = vr.action;
  out["raw"] = vr.raw;
  out["value"] = vr.value;
  std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reachability solver for partially observable hybrid systems"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "run configuration JSON")->required();
    cmd->add_option("--policy", opt.policy_path, "policy file path");
    cmd->add_option("--seed", opt.seed, "override the configured seed")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    cmd->add_option("--threads", opt.threads, "worker thread cap (0: all cores)");
    cmd->add_option("--out", opt.out_dir, "override the configured output directory");
  };
  CLI::App* solve = app.add_subcommand("solve", "solve a policy and write it with a report");
  CLI::App* sweep = app.add_subcommand("sweep", "Monte Carlo sweep over initial means");
  CLI::App* inspect = app.add_subcommand("inspect", "evaluate a policy at one belief");
  add_common(solve);
  add_common(sweep);
  add_common(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (solve->parsed()) return cmd_solve(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    return cmd_inspect(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MismatchError& e) {
    std::cerr << "mismatch: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "corrupt artifact: " << e.what() << "\n";
    return 5;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

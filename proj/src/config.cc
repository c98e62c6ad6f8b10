#include "podreach/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace podreach::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& path,
                       const std::string& what) {
  throw ConfigError(origin + ": " + path + " " + what);
}

void reject_unknown(const json& obj, const std::string& origin, const std::string& path,
                    std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : known)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail(origin, path + "." + item.key(), "unknown key");
  }
}

int jint(const json& obj, const std::string& origin, const std::string& path) {
  if (!obj.is_number_integer()) fail(origin, path, "must be an integer");
  return obj.get<int>();
}

double jdouble(const json& obj, const std::string& origin, const std::string& path) {
  if (!obj.is_number()) fail(origin, path, "must be a number");
  return obj.get<double>();
}

std::string jstring(const json& obj, const std::string& origin, const std::string& path) {
  if (!obj.is_string()) fail(origin, path, "must be a string");
  return obj.get<std::string>();
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(origin + ": not valid JSON");
  if (!j.is_object()) throw ConfigError(origin + ": $ must be an object");
  reject_unknown(j, origin, "$",
                 {"schema_version", "model", "solver", "sweep", "inspect", "output_dir"});
  if (!j.contains("schema_version")) fail(origin, "$.schema_version", "is required");
  if (jint(j["schema_version"], origin, "$.schema_version") != 1)
    fail(origin, "$.schema_version", "must be 1");

  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) fail(origin, "$.model", "must be an object");
    reject_unknown(m, origin, "$.model", {"builtin", "file"});
    if (m.contains("builtin") && m.contains("file"))
      fail(origin, "$.model", "takes builtin or file, not both");
    if (m.contains("file")) {
      cfg.model.file = jstring(m["file"], origin, "$.model.file");
      cfg.model.builtin.clear();
      if (cfg.model.file.empty()) fail(origin, "$.model.file", "must not be empty");
    } else if (m.contains("builtin")) {
      cfg.model.builtin = jstring(m["builtin"], origin, "$.model.builtin");
      if (cfg.model.builtin != "thermostat")
        fail(origin, "$.model.builtin", "unknown builtin model");
    }
  }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    if (!s.is_object()) fail(origin, "$.solver", "must be an object");
    reject_unknown(s, origin, "$.solver",
                   {"horizon", "belief_count", "reduce_to", "indicator_components",
                    "sample_horizon", "seed"});
    if (s.contains("horizon")) cfg.solver.horizon = jint(s["horizon"], origin, "$.solver.horizon");
    if (s.contains("belief_count"))
      cfg.solver.belief_count = jint(s["belief_count"], origin, "$.solver.belief_count");
    if (s.contains("reduce_to"))
      cfg.solver.reduce_to = jint(s["reduce_to"], origin, "$.solver.reduce_to");
    if (s.contains("indicator_components"))
      cfg.solver.indicator_components =
          jint(s["indicator_components"], origin, "$.solver.indicator_components");
    if (s.contains("sample_horizon"))
      cfg.solver.sample_horizon = jint(s["sample_horizon"], origin, "$.solver.sample_horizon");
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned() && !s["seed"].is_number_integer())
        fail(origin, "$.solver.seed", "must be a non-negative integer");
      const auto v = s["seed"].get<std::int64_t>();
      if (s["seed"].is_number_integer() && !s["seed"].is_number_unsigned() && v < 0)
        fail(origin, "$.solver.seed", "must be a non-negative integer");
      cfg.solver.seed = s["seed"].get<std::uint64_t>();
    }
    if (cfg.solver.horizon < 1) fail(origin, "$.solver.horizon", "must be >= 1");
    if (cfg.solver.belief_count < 1) fail(origin, "$.solver.belief_count", "must be positive");
    if (cfg.solver.reduce_to < 1) fail(origin, "$.solver.reduce_to", "must be positive");
    if (cfg.solver.indicator_components < 0)
      fail(origin, "$.solver.indicator_components", "must be non-negative");
    if (cfg.solver.sample_horizon < 0)
      fail(origin, "$.solver.sample_horizon", "must be non-negative");
  }

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    if (!s.is_object()) fail(origin, "$.sweep", "must be an object");
    reject_unknown(s, origin, "$.sweep", {"mu0_grid", "n_runs", "mode"});
    if (s.contains("mu0_grid")) {
      const json& g = s["mu0_grid"];
      if (!g.is_array() || g.empty())
        fail(origin, "$.sweep.mu0_grid", "must be a non-empty array");
      cfg.sweep.mu0_grid.clear();
      for (std::size_t i = 0; i < g.size(); ++i)
        cfg.sweep.mu0_grid.push_back(
            jdouble(g[i], origin, "$.sweep.mu0_grid[" + std::to_string(i) + "]"));
      for (std::size_t i = 1; i < cfg.sweep.mu0_grid.size(); ++i)
        if (!(cfg.sweep.mu0_grid[i] > cfg.sweep.mu0_grid[i - 1]))
          fail(origin, "$.sweep.mu0_grid", "must be strictly increasing");
    }
    if (s.contains("n_runs")) {
      cfg.sweep.n_runs = jint(s["n_runs"], origin, "$.sweep.n_runs");
      if (cfg.sweep.n_runs < 1) fail(origin, "$.sweep.n_runs", "must be positive");
    }
    if (s.contains("mode")) {
      const std::string mode = jstring(s["mode"], origin, "$.sweep.mode");
      if (mode == "stationary")
        cfg.sweep.stationary = true;
      else if (mode == "time-varying")
        cfg.sweep.stationary = false;
      else
        fail(origin, "$.sweep.mode", "must be \"time-varying\" or \"stationary\"");
    }
  }

  if (j.contains("inspect")) {
    const json& s = j["inspect"];
    if (!s.is_object()) fail(origin, "$.inspect", "must be an object");
    reject_unknown(s, origin, "$.inspect", {"mu0", "s2", "q0", "stage"});
    if (!s.contains("mu0")) fail(origin, "$.inspect.mu0", "is required");
    cfg.inspect.present = true;
    cfg.inspect.mu0 = jdouble(s["mu0"], origin, "$.inspect.mu0");
    if (s.contains("s2")) {
      cfg.inspect.s2 = jdouble(s["s2"], origin, "$.inspect.s2");
      if (!(cfg.inspect.s2 > 0.0)) fail(origin, "$.inspect.s2", "must be positive");
    }
    if (s.contains("q0")) {
      cfg.inspect.q0 = jint(s["q0"], origin, "$.inspect.q0");
      if (cfg.inspect.q0 < 0) fail(origin, "$.inspect.q0", "must be non-negative");
    }
    if (s.contains("stage")) {
      cfg.inspect.stage = jint(s["stage"], origin, "$.inspect.stage");
      if (cfg.inspect.stage < 0) fail(origin, "$.inspect.stage", "must be non-negative");
    }
  }

  if (j.contains("output_dir")) {
    cfg.output_dir = jstring(j["output_dir"], origin, "$.output_dir");
    if (cfg.output_dir.empty()) fail(origin, "$.output_dir", "must not be empty");
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  if (!cfg.model.file.empty())
    j["model"]["file"] = cfg.model.file;
  else
    j["model"]["builtin"] = cfg.model.builtin;
  j["solver"]["horizon"] = cfg.solver.horizon;
  j["solver"]["belief_count"] = cfg.solver.belief_count;
  j["solver"]["reduce_to"] = cfg.solver.reduce_to;
  j["solver"]["indicator_components"] = cfg.solver.indicator_components;
  j["solver"]["sample_horizon"] = cfg.solver.sample_horizon;
  j["solver"]["seed"] = cfg.solver.seed;
  j["sweep"]["mu0_grid"] = cfg.sweep.mu0_grid;
  j["sweep"]["n_runs"] = cfg.sweep.n_runs;
  j["sweep"]["mode"] = cfg.sweep.stationary ? "stationary" : "time-varying";
  if (cfg.inspect.present) {
    j["inspect"]["mu0"] = cfg.inspect.mu0;
    j["inspect"]["s2"] = cfg.inspect.s2;
    j["inspect"]["q0"] = cfg.inspect.q0;
    j["inspect"]["stage"] = cfg.inspect.stage;
  }
  j["output_dir"] = cfg.output_dir;
  return j.dump();
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(config_to_json(cfg)); }

hsmodel::HybridModel build_model(const RunConfig& cfg) {
  hsmodel::HybridModel model;
  if (!cfg.model.file.empty()) {
    model = hsmodel::load_model_file(cfg.model.file);
  } else {
    hsmodel::ThermostatParams params;
    if (cfg.solver.indicator_components > 0)
      params.n_indicator = cfg.solver.indicator_components;
    model = hsmodel::build_thermostat(params);
    return model;
  }
  if (cfg.solver.indicator_components > 0 &&
      cfg.solver.indicator_components != model.indicator_components) {
    model.indicator_components = cfg.solver.indicator_components;
    model.rebuild_indicator();
  }
  return model;
}

}  // namespace podreach::config

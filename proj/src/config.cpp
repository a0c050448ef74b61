#include "mpcache/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include "json.hpp"
#include "mpcache/rng.hpp"

#ifndef MPCACHE_VERSION
#define MPCACHE_VERSION "0.1.0"
#endif

namespace mpcache {

const char* version() { return MPCACHE_VERSION; }

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw ParameterError("config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ParameterError("unknown config key '" + section + "." + it.key() + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void convergence_from_json(const json& j, ConvergenceSection& s) {
  check_keys(j, "convergence",
             {"agent_count", "edge_count", "feature_dim", "target_dim", "sample_count", "mu1",
              "mu2", "mu3", "mu12", "upsilon", "rho", "gamma", "tau", "zeta", "iterations"});
  maybe(j, "agent_count", s.instance.agent_count);
  maybe(j, "edge_count", s.instance.edge_count);
  maybe(j, "feature_dim", s.instance.feature_dim);
  maybe(j, "target_dim", s.instance.target_dim);
  maybe(j, "sample_count", s.instance.sample_count);
  maybe(j, "mu1", s.instance.mu1);
  maybe(j, "mu2", s.instance.mu2);
  maybe(j, "mu3", s.instance.mu3);
  maybe(j, "mu12", s.instance.mu12);
  maybe(j, "upsilon", s.instance.upsilon);
  maybe(j, "rho", s.rho);
  maybe(j, "gamma", s.gamma);
  maybe(j, "tau", s.tau);
  maybe(j, "zeta", s.zeta);
  maybe(j, "iterations", s.iterations);
}

json convergence_to_json(const ConvergenceSection& s) {
  json j;
  j["agent_count"] = s.instance.agent_count;
  j["edge_count"] = s.instance.edge_count;
  j["feature_dim"] = s.instance.feature_dim;
  j["target_dim"] = s.instance.target_dim;
  j["sample_count"] = s.instance.sample_count;
  j["mu1"] = s.instance.mu1;
  j["mu2"] = s.instance.mu2;
  j["mu3"] = s.instance.mu3;
  j["mu12"] = s.instance.mu12;
  j["upsilon"] = s.instance.upsilon;
  j["rho"] = s.rho;
  j["gamma"] = s.gamma;
  j["tau"] = s.tau;
  j["zeta"] = s.zeta;
  j["iterations"] = s.iterations;
  return j;
}

void pipeline_from_json(const json& j, PipelineConfig& p) {
  check_keys(j, "pipeline",
             {"side", "group_count", "file_count", "mt_count", "iota", "t_d",
              "rate_per_minute", "poisson_requests", "mu1", "mu2", "mu3", "mu12", "rho",
              "gamma", "tau", "zeta", "solver_mode", "admm_iters", "upsilon",
              "normalized_transition_time", "t_max", "sojourn_mean_min", "sojourn_mean_max",
              "placement_concentration", "train_horizon_minutes", "history_windows"});
  maybe(j, "side", p.side);
  maybe(j, "group_count", p.group_count);
  maybe(j, "file_count", p.file_count);
  maybe(j, "mt_count", p.mt_count);
  maybe(j, "iota", p.iota);
  maybe(j, "t_d", p.t_d);
  maybe(j, "rate_per_minute", p.rate_per_minute);
  maybe(j, "poisson_requests", p.poisson_requests);
  maybe(j, "mu1", p.mu1);
  maybe(j, "mu2", p.mu2);
  maybe(j, "mu3", p.mu3);
  maybe(j, "mu12", p.mu12);
  maybe(j, "rho", p.rho);
  maybe(j, "gamma", p.gamma);
  maybe(j, "tau", p.tau);
  maybe(j, "zeta", p.zeta);
  maybe(j, "solver_mode", p.solver_mode);
  maybe(j, "admm_iters", p.admm_iters);
  maybe(j, "upsilon", p.upsilon);
  maybe(j, "normalized_transition_time", p.normalized_transition_time);
  maybe(j, "t_max", p.t_max);
  maybe(j, "sojourn_mean_min", p.sojourn_mean_min);
  maybe(j, "sojourn_mean_max", p.sojourn_mean_max);
  maybe(j, "placement_concentration", p.placement_concentration);
  maybe(j, "train_horizon_minutes", p.train_horizon_minutes);
  maybe(j, "history_windows", p.history_windows);
}

json pipeline_to_json(const PipelineConfig& p) {
  json j;
  j["side"] = p.side;
  j["group_count"] = p.group_count;
  j["file_count"] = p.file_count;
  j["mt_count"] = p.mt_count;
  j["iota"] = p.iota;
  j["t_d"] = p.t_d;
  j["rate_per_minute"] = p.rate_per_minute;
  j["poisson_requests"] = p.poisson_requests;
  j["mu1"] = p.mu1;
  j["mu2"] = p.mu2;
  j["mu3"] = p.mu3;
  j["mu12"] = p.mu12;
  j["rho"] = p.rho;
  j["gamma"] = p.gamma;
  j["tau"] = p.tau;
  j["zeta"] = p.zeta;
  j["solver_mode"] = p.solver_mode;
  j["admm_iters"] = p.admm_iters;
  j["upsilon"] = p.upsilon;
  j["normalized_transition_time"] = p.normalized_transition_time;
  j["t_max"] = p.t_max;
  j["sojourn_mean_min"] = p.sojourn_mean_min;
  j["sojourn_mean_max"] = p.sojourn_mean_max;
  j["placement_concentration"] = p.placement_concentration;
  j["train_horizon_minutes"] = p.train_horizon_minutes;
  j["history_windows"] = p.history_windows;
  return j;
}

void grid_from_json(const json& j, GridSpec& g) {
  check_keys(j, "grid", {"lat_min", "lat_max", "lon_min", "lon_max", "side"});
  maybe(j, "lat_min", g.lat_min);
  maybe(j, "lat_max", g.lat_max);
  maybe(j, "lon_min", g.lon_min);
  maybe(j, "lon_max", g.lon_max);
  maybe(j, "side", g.side);
}

json grid_to_json(const GridSpec& g) {
  json j;
  j["lat_min"] = g.lat_min;
  j["lat_max"] = g.lat_max;
  j["lon_min"] = g.lon_min;
  j["lon_max"] = g.lon_max;
  j["side"] = g.side;
  return j;
}

json run_config_to_json_obj(const RunConfig& cfg) {
  json j;
  j["convergence"] = convergence_to_json(cfg.convergence);
  j["pipeline"] = pipeline_to_json(cfg.pipeline);
  j["grid"] = grid_to_json(cfg.grid);
  j["trajectories_csv"] = cfg.trajectories_csv;
  j["thetas"] = cfg.thetas;
  j["seed_count"] = cfg.seed_count;
  j["cache_dir"] = cfg.cache_dir;
  return j;
}

RunConfig run_config_from_json_obj(const json& j) {
  check_keys(j, "config", {"convergence", "pipeline", "grid", "trajectories_csv", "thetas",
                           "seed_count", "cache_dir"});
  RunConfig cfg;
  if (j.contains("convergence")) convergence_from_json(j.at("convergence"), cfg.convergence);
  if (j.contains("pipeline")) pipeline_from_json(j.at("pipeline"), cfg.pipeline);
  if (j.contains("grid")) grid_from_json(j.at("grid"), cfg.grid);
  maybe(j, "trajectories_csv", cfg.trajectories_csv);
  maybe(j, "thetas", cfg.thetas);
  maybe(j, "seed_count", cfg.seed_count);
  maybe(j, "cache_dir", cfg.cache_dir);
  return cfg;
}

}  // namespace

void RunConfig::validate() const {
  pipeline.validate();
  if (convergence.iterations < 0) throw ParameterError("convergence.iterations negative");
  if (seed_count <= 0) throw ParameterError("seed_count must be positive");
  for (int t : thetas)
    if (t < 0 || t > pipeline.file_count)
      throw ParameterError("theta " + std::to_string(t) + " outside [0, file_count]");
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config is not valid json: ") + e.what());
  }
  try {
    return run_config_from_json_obj(j);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config field has the wrong type: ") + e.what());
  }
}

std::string config_to_json(const RunConfig& cfg) {
  return run_config_to_json_obj(cfg).dump(1) + "\n";
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

std::string manifest_json(const CliOptions& opt, std::uint64_t seed, const RunConfig& cfg,
                          const std::vector<std::string>& outputs) {
  json j;
  j["tool"] = "mpcache";
  j["version"] = version();
  j["command"] = opt.command;
  j["seed"] = std::to_string(seed);
  j["mode"] = opt.mode;
  j["algorithm"] = opt.algorithm;
  j["out_dir"] = opt.out_dir;
  j["config"] = run_config_to_json_obj(cfg);
  j["outputs"] = outputs;
  return j.dump(1) + "\n";
}

CliOptions options_from_manifest(const std::string& path, RunConfig& cfg_out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
    CliOptions opt;
    opt.command = j.at("command").get<std::string>();
    opt.seed = std::stoull(j.at("seed").get<std::string>());
    opt.mode = j.at("mode").get<std::string>();
    opt.algorithm = j.at("algorithm").get<std::string>();
    opt.out_dir = j.at("out_dir").get<std::string>();
    cfg_out = run_config_from_json_obj(j.at("config"));
    return opt;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace mpcache

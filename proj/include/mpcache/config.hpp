#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpcache/mobility.hpp"
#include "mpcache/pipeline.hpp"

namespace mpcache {

const char* version();

// Convergence-experiment section: problem instance plus solver scalars.
struct ConvergenceSection {
  ConvergenceConfig instance;
  double rho = 1.0, gamma = 1.0, tau = 1.0, zeta = 1.0;
  int iterations = 300;
};

// Full run configuration. Every field has a default; JSON files may set any
// subset but unknown keys are rejected.
struct RunConfig {
  ConvergenceSection convergence;
  PipelineConfig pipeline;
  GridSpec grid;
  std::string trajectories_csv;
  std::vector<int> thetas = {2, 4, 6, 8, 10, 12};
  int seed_count = 1;
  std::string cache_dir;

  void validate() const;
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);  // empty path -> defaults

// Parsed command line.
struct CliOptions {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string mode = "paper-defaults";  // or "theorem-safe"
  std::string algorithm = "both";       // "1", "2", "both"
};

// Runs one CLI command end to end, writing outputs and manifest.json into
// opt.out_dir. Returns the process exit code. When opt.seed is empty a seed
// is derived from std::random_device and recorded in the manifest.
int run_command(const CliOptions& opt);

// Resolved-manifest body: version, command, seed, mode, algorithm, resolved
// config, list of outputs. Rerunning a command from a stored manifest
// reproduces every output byte for byte.
std::string manifest_json(const CliOptions& opt, std::uint64_t seed, const RunConfig& cfg,
                          const std::vector<std::string>& outputs);

// Reads command/seed/mode/algorithm/config back from a manifest file.
CliOptions options_from_manifest(const std::string& path, RunConfig& cfg_out);

// Locale-independent shortest-round-trip double formatting used by all CSV
// and JSON writers.
std::string fmt_double(double v);

}  // namespace mpcache

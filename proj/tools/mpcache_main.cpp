// Command-line front end: decentralized multi-task preference learning with
// mobility-adaptive reweighting, plus the proactive-caching evaluation
// harness around it.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mpcache/config.hpp"
#include "mpcache/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"decentralized preference learning and proactive caching"};
  app.set_version_flag("--version", std::string(mpcache::version()));

  mpcache::CliOptions opt;
  std::int64_t seed = -1;

  app.require_subcommand(1);
  std::vector<CLI::App*> subs;
  subs.push_back(app.add_subcommand("convergence",
                                    "random-instance solver run against the centralized "
                                    "reference, with trace and accuracy files"));
  subs.push_back(app.add_subcommand("preference",
                                    "end-to-end synthetic experiment up to the per-agent "
                                    "preference estimates"));
  subs.push_back(app.add_subcommand("caching",
                                    "preference experiment plus cache placement and hit "
                                    "ratios over the configured cache sizes"));
  subs.push_back(app.add_subcommand("validate-params",
                                    "check step sizes and proximal weights against the "
                                    "convergence thresholds"));
  subs.push_back(app.add_subcommand("ingest-traces",
                                    "discretize raw trajectory CSV onto the service grid"));
  for (CLI::App* sub : subs) {
    sub->add_option("--config", opt.config_path, "JSON config path")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (random when omitted)");
    sub->add_option("--out", opt.out_dir, "output directory (default: out)");
    sub->add_option("--mode", opt.mode, "paper-defaults | theorem-safe")
        ->check(CLI::IsMember({"paper-defaults", "theorem-safe"}));
    sub->add_option("--algorithm", opt.algorithm, "1 | 2 | both")
        ->check(CLI::IsMember({"1", "2", "both"}));
  }

  CLI11_PARSE(app, argc, argv);

  for (CLI::App* sub : subs)
    if (sub->parsed()) opt.command = sub->get_name();
  if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);

  try {
    return mpcache::run_command(opt);
  } catch (const mpcache::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

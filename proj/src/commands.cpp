#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <tuple>

#include "json.hpp"
#include "mpcache/config.hpp"
#include "mpcache/rng.hpp"

namespace mpcache {

namespace {

using nlohmann::json;

struct ResultRow {
  std::uint64_t seed = 0;
  int theta = 0;
  double iota = 0.0;
  std::string policy;
  std::string source;
  double hit = std::numeric_limits<double>::quiet_NaN();
  double eps = std::numeric_limits<double>::quiet_NaN();
};

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "seed,theta,iota,policy,preference_source,hit_ratio,epsilon\n";
  for (const auto& r : rows)
    out << r.seed << ',' << r.theta << ',' << fmt_double(r.iota) << ',' << r.policy << ','
        << r.source << ',' << fmt_double(r.hit) << ',' << fmt_double(r.eps) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

SolverParams section_params(const ConvergenceSection& s, const Problem& problem,
                            const std::string& mode) {
  SolverParams params = SolverParams::uniform(problem.graph.agent_count(), s.tau, s.zeta,
                                              s.rho, s.gamma, s.iterations);
  if (mode == "theorem-safe")
    apply_theorem_safe(params, problem);
  else if (mode != "paper-defaults")
    throw ParameterError("unknown mode '" + mode + "'");
  return params;
}

std::vector<int> selected_algorithms(const std::string& algorithm) {
  if (algorithm == "1") return {1};
  if (algorithm == "2") return {2};
  if (algorithm == "both") return {1, 2};
  throw ParameterError("unknown algorithm selection '" + algorithm + "'");
}

json param_report_json(int alg, const SolverParams& params, const ParamReport& rep) {
  json j;
  j["algorithm"] = alg;
  j["ok"] = rep.ok;
  j["rho"] = rep.rho;
  j["gamma"] = rep.gamma;
  j["tau"] = params.tau;
  j["zeta"] = params.zeta;
  j["tau_threshold"] = rep.thresholds.tau_min;
  j["zeta_threshold"] = rep.thresholds.zeta_min;
  j["violations"] = rep.violations;
  return j;
}

int cmd_validate_params(const CliOptions& opt, std::uint64_t seed, const RunConfig& cfg,
                        std::vector<std::string>& outputs) {
  json report = json::array();
  bool all_ok = true;
  for (int alg : selected_algorithms(opt.algorithm)) {
    ConvergenceConfig inst = cfg.convergence.instance;
    inst.adaptive = alg == 2;
    Problem problem = make_convergence_problem(inst, seed);
    SolverParams params = section_params(cfg.convergence, problem, opt.mode);
    ParamReport rep = validate_params(params, problem.graph, problem.lipschitz_constants(),
                                      problem.reg.modulus, problem.feature_dim);
    report.push_back(param_report_json(alg, params, rep));
    all_ok = all_ok && rep.ok;
    std::cout << "validate-params: algorithm " << alg << (rep.ok ? " satisfies" : " violates")
              << " the convergence thresholds (" << rep.violations.size() << " violations)\n";
  }
  write_text(opt.out_dir + "/param_report.json", report.dump(1) + "\n");
  outputs.push_back("param_report.json");
  return all_ok ? 0 : 3;
}

int cmd_convergence(const CliOptions& opt, std::uint64_t seed, const RunConfig& cfg,
                    std::vector<std::string>& outputs) {
  for (int alg : selected_algorithms(opt.algorithm)) {
    ConvergenceConfig inst = cfg.convergence.instance;
    inst.adaptive = alg == 2;
    Problem problem = make_convergence_problem(inst, seed);
    SolverParams params = section_params(cfg.convergence, problem, opt.mode);

    ReferenceSolution ref = reference_solution(problem, cfg.cache_dir);
    DiagnosticsInput di{ref.wc, ref.wh, ref.objective};
    Iterate init = random_iterate(problem, mix_seed(seed, 0xadb0 + alg));

    std::vector<std::tuple<int, double, double>> accuracy;
    accuracy.reserve(params.max_iter);
    AdmmOptions run_opts;
    run_opts.reference = &di;
    run_opts.on_iterate = [&](const Iterate& it) {
      auto [ec, eh] = iterate_error(it, ref);
      accuracy.emplace_back(it.k, ec, eh);
    };
    auto [final_it, trace] = run_admm(problem, params, std::move(init), run_opts);

    std::string tag = "alg" + std::to_string(alg);
    trace.save_csv(opt.out_dir + "/trace_" + tag + ".csv");
    outputs.push_back("trace_" + tag + ".csv");

    std::ofstream acc(opt.out_dir + "/accuracy_" + tag + ".csv");
    if (!acc) throw DataError("cannot write accuracy csv");
    acc << "k,e_wcheck,e_what\n";
    for (auto& [k, ec, eh] : accuracy)
      acc << k << ',' << fmt_double(ec) << ',' << fmt_double(eh) << '\n';
    outputs.push_back("accuracy_" + tag + ".csv");

    auto [ec, eh] = iterate_error(final_it, ref);
    std::cout << "convergence: algorithm " << alg << " reached E_wcheck=" << ec
              << " E_what=" << eh << " after " << final_it.k << " iterations (reference "
              << ref.method << ", objective " << ref.objective << ")\n";
  }
  return 0;
}

json preference_json(const PreferenceRun& run) {
  json agents = json::array();
  for (int i = 0; i < run.agent_count; ++i) {
    json a;
    a["agent"] = i;
    a["observed"] = std::vector<double>(run.p_obs[i].data(),
                                        run.p_obs[i].data() + run.p_obs[i].size());
    a["alg1"] = std::vector<double>(run.p_hat1[i].data(),
                                    run.p_hat1[i].data() + run.p_hat1[i].size());
    a["alg2"] = std::vector<double>(run.p_hat2[i].data(),
                                    run.p_hat2[i].data() + run.p_hat2[i].size());
    a["alg2_shared"] = std::vector<double>(run.p_tilde2[i].data(),
                                           run.p_tilde2[i].data() + run.p_tilde2[i].size());
    a["observed_valid"] = static_cast<bool>(run.obs_valid[i]);
    a["predicted_valid"] =
        static_cast<bool>(run.pred_valid1[i]) && static_cast<bool>(run.pred_valid2[i]);
    agents.push_back(std::move(a));
  }
  json j;
  j["agents"] = std::move(agents);
  return j;
}

int cmd_preference(const CliOptions& opt, std::uint64_t seed, const RunConfig& cfg,
                   std::vector<std::string>& outputs) {
  std::vector<ResultRow> rows;
  double sum1 = 0.0, sum2 = 0.0;
  for (int s = 0; s < cfg.seed_count; ++s) {
    std::uint64_t run_seed = seed + s;
    PreferenceRun run = run_preference_pipeline(cfg.pipeline, run_seed);
    sum1 += run.eps1;
    sum2 += run.eps2;
    ResultRow r1{run_seed, 0, cfg.pipeline.iota, "none", "alg1",
                 std::numeric_limits<double>::quiet_NaN(), run.eps1};
    ResultRow r2{run_seed, 0, cfg.pipeline.iota, "none", "alg2",
                 std::numeric_limits<double>::quiet_NaN(), run.eps2};
    rows.push_back(r1);
    rows.push_back(r2);
    if (s == 0) {
      write_text(opt.out_dir + "/forecasts.json", forecasts_to_json(run.forecasts));
      write_text(opt.out_dir + "/adaptive.json",
                 adaptive_to_json(run.phi, run.combiners, run.wloc));
      write_text(opt.out_dir + "/preferences.json", preference_json(run).dump(1) + "\n");
      save_datasets_csv(opt.out_dir + "/datasets.csv", run.datasets);
      outputs.insert(outputs.end(),
                     {"forecasts.json", "adaptive.json", "preferences.json", "datasets.csv"});
    }
  }
  write_results_csv(opt.out_dir + "/results.csv", rows);
  outputs.push_back("results.csv");
  std::cout << "preference: mean epsilon alg1=" << sum1 / cfg.seed_count
            << " alg2=" << sum2 / cfg.seed_count << " over " << cfg.seed_count << " seed(s)\n";
  return 0;
}

int cmd_caching(const CliOptions& opt, std::uint64_t seed, const RunConfig& cfg,
                std::vector<std::string>& outputs) {
  std::vector<ResultRow> rows;
  std::vector<double> m2(cfg.thetas.size(), 0.0), m1(cfg.thetas.size(), 0.0),
      mr(cfg.thetas.size(), 0.0);
  for (int s = 0; s < cfg.seed_count; ++s) {
    std::uint64_t run_seed = seed + s;
    PreferenceRun run = run_preference_pipeline(cfg.pipeline, run_seed);
    CachingRun cr = run_caching(run, cfg.pipeline, cfg.thetas, run_seed);
    for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
      rows.push_back({run_seed, cfg.thetas[t], cfg.pipeline.iota, "mpc", "alg2",
                      cr.hit_mpc2[t], run.eps2});
      rows.push_back({run_seed, cfg.thetas[t], cfg.pipeline.iota, "mpc", "alg1",
                      cr.hit_mpc1[t], run.eps1});
      rows.push_back({run_seed, cfg.thetas[t], cfg.pipeline.iota, "rc", "none", cr.hit_rc[t],
                      std::numeric_limits<double>::quiet_NaN()});
      m2[t] += cr.hit_mpc2[t];
      m1[t] += cr.hit_mpc1[t];
      mr[t] += cr.hit_rc[t];
    }
  }
  write_results_csv(opt.out_dir + "/results.csv", rows);
  outputs.push_back("results.csv");

  json summary;
  summary["thetas"] = cfg.thetas;
  for (auto& v : m2) v /= cfg.seed_count;
  for (auto& v : m1) v /= cfg.seed_count;
  for (auto& v : mr) v /= cfg.seed_count;
  summary["mean_hit_mpc_alg2"] = m2;
  summary["mean_hit_mpc_alg1"] = m1;
  summary["mean_hit_rc"] = mr;
  summary["seeds"] = cfg.seed_count;
  write_text(opt.out_dir + "/summary.json", summary.dump(1) + "\n");
  outputs.push_back("summary.json");

  std::cout << "caching: mean hit ratios over " << cfg.seed_count << " seed(s)\n";
  for (std::size_t t = 0; t < cfg.thetas.size(); ++t)
    std::cout << "  theta=" << cfg.thetas[t] << " mpc(alg2)=" << m2[t] << " mpc(alg1)=" << m1[t]
              << " rc=" << mr[t] << "\n";
  return 0;
}

int cmd_ingest_traces(const CliOptions& opt, const RunConfig& cfg,
                      std::vector<std::string>& outputs) {
  if (cfg.trajectories_csv.empty())
    throw ParameterError("ingest-traces requires config key trajectories_csv");
  std::vector<RawPoint> pts = load_trajectory_csv(cfg.trajectories_csv);
  DiscretizedTraces traces = discretize_trajectories(pts, cfg.grid, cfg.pipeline.t_max);
  save_sequences_csv(opt.out_dir + "/sequences.csv", traces);
  outputs.push_back("sequences.csv");
  std::size_t entries = 0;
  for (const auto& s : traces.sequences) entries += s.size();
  std::cout << "ingest-traces: " << pts.size() << " points from " << traces.mt_ids.size()
            << " terminal(s) -> " << entries << " sojourn entries\n";
  return 0;
}

}  // namespace

int run_command(const CliOptions& opt) {
  RunConfig cfg = load_config(opt.config_path);
  cfg.validate();
  std::uint64_t seed;
  if (opt.seed) {
    seed = *opt.seed;
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  std::filesystem::create_directories(opt.out_dir);

  std::vector<std::string> outputs;
  int rc;
  if (opt.command == "validate-params")
    rc = cmd_validate_params(opt, seed, cfg, outputs);
  else if (opt.command == "convergence")
    rc = cmd_convergence(opt, seed, cfg, outputs);
  else if (opt.command == "preference")
    rc = cmd_preference(opt, seed, cfg, outputs);
  else if (opt.command == "caching")
    rc = cmd_caching(opt, seed, cfg, outputs);
  else if (opt.command == "ingest-traces")
    rc = cmd_ingest_traces(opt, cfg, outputs);
  else
    throw ParameterError("unknown command '" + opt.command + "'");

  write_text(opt.out_dir + "/manifest.json", manifest_json(opt, seed, cfg, outputs));
  return rc;
}

}  // namespace mpcache

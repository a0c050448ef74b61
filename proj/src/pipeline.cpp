#include "mpcache/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "mpcache/rng.hpp"

namespace mpcache {

namespace {

// Stream tags for the independent random substreams of one master seed.
enum : std::uint64_t {
  kTagGroups = 0x01,
  kTagProfiles = 0x02,
  kTagTruth = 0x03,
  kTagTrainInit = 0x04,
  kTagTrainTrace = 0x05,
  kTagEpisodeInit = 0x06,
  kTagEpisodeTrace = 0x07,
  kTagHistory = 0x08,
  kTagEval = 0x09,
  kTagAdmmInit = 0x0a,
  kTagRc = 0x0b,
  kTagConvGraph = 0x20,
  kTagConvData = 0x21,
  kTagConvPhi = 0x22,
  kTagConvComb = 0x23,
};

int mt_state_and_elapsed(const StateSequence& seq, double trace_start, double at,
                         int* elapsed_out) {
  double t = trace_start;
  for (const auto& e : seq) {
    if (at < t + e.minutes || &e == &seq.back()) {
      *elapsed_out = std::max(0, static_cast<int>(std::floor(at - t)));
      return e.state;
    }
    t += e.minutes;
  }
  throw DataError("state lookup on an empty trace");
}

}  // namespace

void PipelineConfig::validate() const {
  if (side <= 0 || group_count <= 0 || file_count <= 0 || mt_count <= 0)
    throw ParameterError("pipeline: counts must be positive");
  if (iota < 0.0) throw ParameterError("pipeline: zipf exponent must be nonnegative");
  if (t_d <= 0.0 || rate_per_minute <= 0.0)
    throw ParameterError("pipeline: window and rate must be positive");
  if (mu1 < 0 || mu2 < 0 || mu3 < 0 || mu12 <= 0)
    throw ParameterError("pipeline: invalid regularization constants");
  if (rho <= 0 || gamma <= 0 || gamma >= 2 || tau <= 0 || zeta <= 0)
    throw ParameterError("pipeline: invalid solver scalars");
  if (admm_iters < 0) throw ParameterError("pipeline: negative iteration count");
  if (upsilon <= 0) throw ParameterError("pipeline: upsilon must be positive");
  if (solver_mode != "paper-defaults" && solver_mode != "theorem-safe")
    throw ParameterError("pipeline: solver_mode must be paper-defaults or theorem-safe");
  if (t_max <= 0) throw ParameterError("pipeline: t_max must be positive");
  if (sojourn_mean_min < 1.0 || sojourn_mean_max < sojourn_mean_min)
    throw ParameterError("pipeline: bad sojourn mean range");
  if (placement_concentration < 0.0)
    throw ParameterError("pipeline: concentration must be nonnegative");
  if (train_horizon_minutes <= 0) throw ParameterError("pipeline: bad training horizon");
  if (history_windows < 1) throw ParameterError("pipeline: need at least one history window");
}

MarkovRenewalModel make_synthetic_mobility_model(const AgentGraph& graph, int mt_count,
                                                 int t_max, double mean_min, double mean_max,
                                                 std::uint64_t seed) {
  if (mt_count <= 0) throw ParameterError("mt_count must be positive");
  if (t_max <= 0) throw ParameterError("t_max must be positive");
  if (mean_min < 1.0 || mean_max < mean_min) throw ParameterError("bad sojourn mean range");
  int n = graph.agent_count();
  Rng rng(seed, /*tag=*/0x6d6f6264ULL);

  std::vector<std::vector<std::vector<double>>> rows(
      mt_count, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)));
  std::vector<std::vector<std::vector<double>>> sojourn(
      mt_count, std::vector<std::vector<double>>(n, std::vector<double>(t_max, 0.0)));

  for (int m = 0; m < mt_count; ++m)
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (int j : graph.neighbors(i)) {
        double v = 0.05 + rng.uniform();
        rows[m][i][j] = v;
        total += v;
      }
      if (total > 0.0)
        for (int j : graph.neighbors(i)) rows[m][i][j] /= total;

      double mean = rng.uniform(mean_min, mean_max);
      double p = 1.0 / mean;
      double mass = 0.0, geom = 1.0;
      for (int d = 0; d < t_max; ++d) {
        sojourn[m][i][d] = geom * p;
        mass += sojourn[m][i][d];
        geom *= 1.0 - p;
      }
      for (int d = 0; d < t_max; ++d) sojourn[m][i][d] /= mass;
    }
  return MarkovRenewalModel(std::move(rows), std::move(sojourn), graph);
}

std::vector<int> initial_states_by_group(const AgentGraph& graph, int side,
                                         const std::vector<int>& group_of_mt,
                                         double concentration, std::uint64_t seed) {
  int n = graph.agent_count();
  if (n != side * side) throw DimensionError("initial_states_by_group: not a grid graph");
  std::vector<int> homes = {0, n - 1, side - 1, (side - 1) * side};
  Rng rng(seed, /*tag=*/0x696e6973ULL);
  std::vector<int> states(group_of_mt.size());
  for (std::size_t m = 0; m < group_of_mt.size(); ++m) {
    int home = homes[group_of_mt[m] % homes.size()];
    int hr = home / side, hc = home % side;
    std::vector<double> pmf(n);
    for (int cell = 0; cell < n; ++cell) {
      int dist = std::abs(cell / side - hr) + std::abs(cell % side - hc);
      pmf[cell] = std::exp(-concentration * dist);
    }
    states[m] = rng.sample_pmf(pmf);
  }
  return states;
}

PreferenceRun run_preference_pipeline(const PipelineConfig& cfg, std::uint64_t master_seed) {
  cfg.validate();
  AgentGraph graph = AgentGraph::grid(cfg.side);
  int agents = graph.agent_count();
  int k = cfg.group_count, f = cfg.file_count, m_count = cfg.mt_count;

  Rng group_rng(master_seed, kTagGroups);
  std::vector<int> group_of_mt(m_count);
  for (int m = 0; m < m_count; ++m)
    group_of_mt[m] = static_cast<int>(group_rng.uniform_int(0, k - 1));

  std::vector<ZipfProfile> profiles;
  profiles.reserve(k);
  for (int g = 0; g < k; ++g)
    profiles.push_back(zipf_preference(f, cfg.iota, mix_seed(master_seed, kTagProfiles) + g));

  MarkovRenewalModel truth =
      make_synthetic_mobility_model(graph, m_count, cfg.t_max, cfg.sojourn_mean_min,
                                    cfg.sojourn_mean_max, mix_seed(master_seed, kTagTruth));

  // Mobility estimation from a long exploration trace.
  Rng train_rng(master_seed, kTagTrainInit);
  std::vector<int> train_init(m_count);
  for (int m = 0; m < m_count; ++m)
    train_init[m] = static_cast<int>(train_rng.uniform_int(0, agents - 1));
  std::vector<StateSequence> train_traces = generate_traces(
      truth, graph, train_init, cfg.train_horizon_minutes, mix_seed(master_seed, kTagTrainTrace));
  MarkovRenewalModel est = MarkovRenewalModel::estimate(train_traces, graph, cfg.t_max);

  // Episode: history windows then the scheduling window [0, t_d).
  double history_start = -cfg.history_windows * cfg.t_d;
  int horizon = static_cast<int>(std::ceil((cfg.history_windows + 1) * cfg.t_d));
  std::vector<int> ep_init =
      initial_states_by_group(graph, cfg.side, group_of_mt, cfg.placement_concentration,
                              mix_seed(master_seed, kTagEpisodeInit));
  std::vector<StateSequence> ep_traces = generate_traces(
      truth, graph, ep_init, horizon, mix_seed(master_seed, kTagEpisodeTrace));
  std::vector<LocationTimeline> timelines;
  timelines.reserve(m_count);
  for (int m = 0; m < m_count; ++m) timelines.emplace_back(ep_traces[m], history_start);

  RequestLog history =
      simulate_requests(timelines, group_of_mt, profiles, cfg.rate_per_minute, history_start,
                        0.0, mix_seed(master_seed, kTagHistory), cfg.poisson_requests);

  // Per-agent training sets from the history window.
  std::vector<std::vector<const Request*>> per_agent(agents);
  for (const auto& r : history.requests) per_agent[r.agent].push_back(&r);
  std::vector<AgentDataset> datasets(agents);
  for (int i = 0; i < agents; ++i) {
    int b = static_cast<int>(per_agent[i].size());
    datasets[i].x = Mat::Zero(k, b);
    datasets[i].y = Mat::Zero(f, b);
    datasets[i].mt_of_sample.resize(b);
    for (int l = 0; l < b; ++l) {
      const Request* r = per_agent[i][l];
      auto [x, y] = encode_request_sample(group_of_mt[r->mt] + 1, k, r->file + 1, f);
      datasets[i].x.col(l) = x;
      datasets[i].y.col(l) = y;
      datasets[i].mt_of_sample[l] = r->mt;
    }
  }

  // Forecasts at the scheduling instant t = 0.
  PreferenceRun run;
  run.agent_count = agents;
  run.forecasts.reserve(m_count);
  std::vector<std::vector<int>> occupants(agents);
  for (int m = 0; m < m_count; ++m) {
    int elapsed = 0;
    int state = mt_state_and_elapsed(ep_traces[m], history_start, 0.0, &elapsed);
    run.forecasts.push_back(forecast_mt(est, graph, m, state, elapsed, cfg.t_d,
                                        cfg.normalized_transition_time));
    occupants[state].push_back(m);
  }

  run.datasets = datasets;
  run.phi = compute_phi(run.forecasts, datasets, graph, cfg.t_d);
  run.combiners = compute_combiners(run.forecasts, graph, cfg.upsilon);
  run.wloc = solve_all_transfer_weights(datasets, run.phi, graph, cfg.mu12);

  RegularizationParams reg = RegularizationParams::make(cfg.mu1, cfg.mu2, cfg.mu3, cfg.mu12);
  std::vector<LossModel> plain;
  plain.reserve(agents);
  for (int i = 0; i < agents; ++i) plain.push_back(LossModel::least_square(datasets[i]));
  std::vector<LossModel> adaptive =
      build_adaptive_losses(datasets, run.phi, run.combiners, run.wloc, graph, reg);

  Problem p1 = Problem::make(graph, std::move(plain), reg);
  Problem p2 = Problem::make(graph, std::move(adaptive), reg);

  SolverParams params1 =
      SolverParams::uniform(agents, cfg.tau, cfg.zeta, cfg.rho, cfg.gamma, cfg.admm_iters);
  SolverParams params2 = params1;
  if (cfg.solver_mode == "theorem-safe") {
    apply_theorem_safe(params1, p1);
    apply_theorem_safe(params2, p2);
  }
  Iterate init = random_iterate(p1, mix_seed(master_seed, kTagAdmmInit));
  Iterate it1 = run_admm(p1, params1, init).first;
  Iterate it2 = run_admm(p2, params2, std::move(init)).first;

  run.eval_log =
      simulate_requests(timelines, group_of_mt, profiles, cfg.rate_per_minute, 0.0, cfg.t_d,
                        mix_seed(master_seed, kTagEval), cfg.poisson_requests);

  run.p_obs.resize(agents);
  run.obs_valid.resize(agents);
  run.p_hat1.resize(agents);
  run.p_hat2.resize(agents);
  run.p_tilde2.resize(agents);
  run.pred_valid1.resize(agents);
  run.pred_valid2.resize(agents);
  for (int i = 0; i < agents; ++i) {
    auto [pobs, ok] = observed_preference(run.eval_log, i, f);
    run.p_obs[i] = pobs;
    run.obs_valid[i] = ok;

    std::vector<Eigen::VectorXd> inputs;
    inputs.reserve(occupants[i].size());
    for (int m : occupants[i]) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
      x[group_of_mt[m]] = 1.0;
      inputs.push_back(std::move(x));
    }
    PreferenceEstimate e1 = predicted_preference(it1.wc[i], it1.wh[i], inputs);
    PreferenceEstimate e2 = predicted_preference(it2.wc[i], it2.wh[i], inputs);
    run.p_hat1[i] = e1.p_hat;
    run.p_hat2[i] = e2.p_hat;
    run.p_tilde2[i] = e2.p_tilde;
    run.pred_valid1[i] = e1.valid;
    run.pred_valid2[i] = e2.valid;
  }

  // One shared validity mask keeps the two errors comparable.
  std::vector<bool> valid(agents);
  for (int i = 0; i < agents; ++i)
    valid[i] = run.obs_valid[i] && run.pred_valid1[i] && run.pred_valid2[i];
  run.eps1 = prediction_error(run.p_hat1, run.p_obs, valid);
  run.eps2 = prediction_error(run.p_hat2, run.p_obs, valid);
  return run;
}

CachingRun run_caching(const PreferenceRun& pref, const PipelineConfig& cfg,
                       const std::vector<int>& thetas, std::uint64_t master_seed) {
  CachingRun out;
  out.thetas = thetas;
  int agents = pref.agent_count;
  for (int theta : thetas) {
    std::vector<std::vector<int>> mpc2(agents), mpc1(agents), rc(agents);
    for (int i = 0; i < agents; ++i) {
      mpc2[i] = place_cache_mpc(pref.p_hat2[i], theta);
      mpc1[i] = place_cache_mpc(pref.p_hat1[i], theta);
      std::uint64_t tag = (kTagRc << 32) | (static_cast<std::uint64_t>(i) << 16) |
                          static_cast<std::uint64_t>(theta);
      rc[i] = place_cache_rc(cfg.file_count, theta, mix_seed(master_seed, tag));
    }
    out.hit_mpc2.push_back(hit_ratio(mpc2, pref.eval_log, agents).average);
    out.hit_mpc1.push_back(hit_ratio(mpc1, pref.eval_log, agents).average);
    out.hit_rc.push_back(hit_ratio(rc, pref.eval_log, agents).average);
  }
  return out;
}

Problem make_convergence_problem(const ConvergenceConfig& cfg, std::uint64_t seed) {
  if (cfg.agent_count <= 0 || cfg.feature_dim <= 0 || cfg.target_dim <= 0 ||
      cfg.sample_count < 0)
    throw ParameterError("convergence config: invalid dimensions");
  AgentGraph graph =
      AgentGraph::random_connected(cfg.agent_count, cfg.edge_count, mix_seed(seed, kTagConvGraph));

  std::vector<AgentDataset> datasets;
  datasets.reserve(cfg.agent_count);
  for (int i = 0; i < cfg.agent_count; ++i)
    datasets.push_back(make_synthetic_dataset(cfg.feature_dim, cfg.target_dim,
                                              cfg.sample_count,
                                              mix_seed(seed, kTagConvData) + i));

  RegularizationParams reg = RegularizationParams::make(cfg.mu1, cfg.mu2, cfg.mu3, cfg.mu12);
  std::vector<LossModel> losses;
  losses.reserve(cfg.agent_count);
  if (!cfg.adaptive) {
    for (int i = 0; i < cfg.agent_count; ++i)
      losses.push_back(LossModel::least_square(datasets[i]));
  } else {
    std::vector<int> counts(cfg.agent_count, cfg.sample_count);
    AdaptiveWeights phi = random_phi(graph, counts, mix_seed(seed, kTagConvPhi));
    CombinerMatrix comb =
        random_combiners(graph, cfg.upsilon, mix_seed(seed, kTagConvComb));
    auto wloc = solve_all_transfer_weights(datasets, phi, graph, cfg.mu12);
    losses = build_adaptive_losses(datasets, phi, comb, wloc, graph, reg);
  }
  return Problem::make(std::move(graph), std::move(losses), reg);
}

}  // namespace mpcache

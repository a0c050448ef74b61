#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "mpcache/oracle.hpp"
#include "mpcache/solver.hpp"

using namespace mpcache;
using testutil::random_mat;
using testutil::TempDir;

namespace {

Problem small_problem(int agents, int edges, int n, int nu, int b, std::uint64_t seed,
                      double mu1 = 0.5, double mu2 = 0.8) {
  auto graph = AgentGraph::random_connected(agents, edges, seed);
  std::vector<LossModel> losses;
  for (int i = 0; i < agents; ++i)
    losses.push_back(LossModel::least_square(make_synthetic_dataset(n, nu, b, seed * 100 + i)));
  return Problem::make(std::move(graph), std::move(losses),
                       RegularizationParams::make(mu1, mu2, 1.0, 1.0));
}

Problem empty_pair_problem(double mu1, double mu2) {
  auto graph = AgentGraph::from_edges(2, {{0, 1}});
  std::vector<LossModel> losses = {LossModel::empty(2, 1), LossModel::empty(2, 1)};
  return Problem::make(std::move(graph), std::move(losses),
                       RegularizationParams::make(mu1, mu2, 1.0, 1.0));
}

double iterate_diff(const Iterate& a, const Iterate& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.wc.size(); ++i) {
    d = std::max(d, (a.wc[i] - b.wc[i]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.wh[i] - b.wh[i]).cwiseAbs().maxCoeff());
  }
  for (std::size_t e = 0; e < a.lambda.size(); ++e)
    d = std::max(d, (a.lambda[e] - b.lambda[e]).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

TEST_CASE("problem construction and objective") {
  auto p = small_problem(3, 2, 2, 1, 4, 9);
  CHECK(p.feature_dim == 2);
  CHECK(p.target_dim == 1);

  auto wc = std::vector<Mat>(3, Mat::Ones(2, 1));
  auto wh = std::vector<Mat>(3, Mat::Constant(2, 1, -0.5));
  double direct = 0.0;
  for (int i = 0; i < 3; ++i)
    direct += p.losses[i].value(wc[i], wh[i]) + 0.5 * p.reg.mu1 * wc[i].squaredNorm() +
              0.5 * p.reg.mu2 * wh[i].squaredNorm();
  CHECK(p.objective(wc, wh) == doctest::Approx(direct).epsilon(1e-14));

  auto graph = AgentGraph::from_edges(2, {{0, 1}});
  std::vector<LossModel> one = {LossModel::empty(2, 1)};
  CHECK_THROWS_AS(
      Problem::make(graph, one, RegularizationParams::make(1, 1, 1, 1)), DimensionError);

  auto disconnected = AgentGraph::from_edges(4, {{0, 1}, {2, 3}});
  std::vector<LossModel> four(4, LossModel::empty(2, 1));
  CHECK_THROWS_AS(
      Problem::make(disconnected, four, RegularizationParams::make(1, 1, 1, 1)), TopologyError);
}

TEST_CASE("safe thresholds reproduce the pinned arithmetic") {
  // Ring of 10 plus one chord: degree 3 at agents 0 and 5, else 2.
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < 10; ++i) edges.push_back({i, (i + 1) % 10});
  edges.push_back({0, 5});
  auto graph = AgentGraph::from_edges(10, edges);

  std::vector<double> lip(10, 1.0);
  auto th = safe_thresholds(graph, lip, 1.0, 10, 1.0, 1.0);
  CHECK(th.tau_min[0] == doctest::Approx(3.0 + 36.0 * std::sqrt(10.0)).epsilon(1e-14));
  CHECK(th.tau_min[1] == doctest::Approx(2.0 + 36.0 * std::sqrt(10.0)).epsilon(1e-14));
  CHECK(th.zeta_min[0] == doctest::Approx(2.0).epsilon(1e-14));

  // gamma close to 2 activates the second branch: rho (N/(2-gamma) - 1) d.
  auto th2 = safe_thresholds(graph, lip, 1.0, 10, 1.0, 1.99);
  CHECK(th2.tau_min[0] == doctest::Approx((10.0 / 0.01 - 1.0) * 3.0).epsilon(1e-12));

  SolverParams params = SolverParams::uniform(10, 1.0, 1.0);
  auto report = validate_params(params, graph, lip, 1.0, 10);
  CHECK_FALSE(report.ok);
  CHECK(report.violations.size() == 20);  // every tau and every zeta too small

  SolverParams good = SolverParams::uniform(10, 120.0, 2.5);
  CHECK(validate_params(good, graph, lip, 1.0, 10).ok);

  // Sitting exactly on the threshold still violates the strict inequality.
  SolverParams edge_case = SolverParams::uniform(10, 120.0, 2.0);
  CHECK_FALSE(validate_params(edge_case, graph, lip, 1.0, 10).ok);

  SolverParams bad_gamma = good;
  bad_gamma.gamma = 2.0;
  CHECK_THROWS_AS(validate_params(bad_gamma, graph, lip, 1.0, 10), ParameterError);
  bad_gamma.gamma = 0.0;
  CHECK_THROWS_AS(validate_params(bad_gamma, graph, lip, 1.0, 10), ParameterError);
  SolverParams bad_rho = good;
  bad_rho.rho = 0.0;
  CHECK_THROWS_AS(validate_params(bad_rho, graph, lip, 1.0, 10), ParameterError);
  SolverParams bad_tau = good;
  bad_tau.tau[3] = 0.0;
  CHECK_THROWS_AS(validate_params(bad_tau, graph, lip, 1.0, 10), ParameterError);
  SolverParams short_tau = good;
  short_tau.tau.pop_back();
  CHECK_THROWS_AS(validate_params(short_tau, graph, lip, 1.0, 10), DimensionError);
}

TEST_CASE("apply_theorem_safe clears all violations") {
  auto p = small_problem(5, 7, 4, 1, 6, 17);
  SolverParams params = SolverParams::uniform(5, 1.0, 1.0);
  apply_theorem_safe(params, p);
  auto report =
      validate_params(params, p.graph, p.lipschitz_constants(), p.reg.modulus, p.feature_dim);
  CHECK(report.ok);
}

TEST_CASE("subproblem solves reduce to the scalar shrink on empty data") {
  auto p = empty_pair_problem(0.3, 0.25);
  SolverParams params = SolverParams::uniform(2, 2.0, 1.5);

  Iterate cur = zero_iterate(p);
  cur.wc[0] << 1.0, 2.0;
  cur.wh[0] << 4.0, -2.0;

  AgentSubproblem s0(0, p, params);
  AgentSubproblem s1(1, p, params);

  // (mu1 + rho d + tau) w = tau w^k  ->  w = tau/(mu1 + rho + tau) w^k
  Mat wc0 = s0.solve_wc(cur);
  CHECK((wc0 - (2.0 / 3.3) * cur.wc[0]).cwiseAbs().maxCoeff() < 1e-14);
  // Neighbor term: rho * wc_0^k enters agent 1's right-hand side.
  Mat wc1 = s1.solve_wc(cur);
  CHECK((wc1 - cur.wc[0] / 3.3).cwiseAbs().maxCoeff() < 1e-14);

  Mat wh0 = s0.solve_wh(cur, Mat::Zero(2, 1));
  CHECK((wh0 - (1.5 / 1.75) * cur.wh[0]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("huge proximal weight freezes the iterate") {
  auto p = small_problem(3, 3, 3, 1, 5, 23);
  SolverParams params = SolverParams::uniform(3, 1e9, 1e9);
  Iterate cur = random_iterate(p, 5);
  for (int i = 0; i < 3; ++i) {
    AgentSubproblem s(i, p, params);
    Mat wc = s.solve_wc(cur);
    CHECK((wc - cur.wc[i]).cwiseAbs().maxCoeff() < 1e-6);
    Mat wh = s.solve_wh(cur, wc);
    CHECK((wh - cur.wh[i]).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("stationarity residuals of the closed-form solves") {
  auto p = small_problem(4, 5, 4, 2, 6, 29);
  SolverParams params = SolverParams::uniform(4, 1.3, 0.9);
  Iterate cur = random_iterate(p, 11);
  // Seed nonzero multipliers so the lambda term enters the residual check.
  for (auto& l : cur.lambda) l.setConstant(0.37);
  for (int i = 0; i < 4; ++i) {
    AgentSubproblem s(i, p, params);
    Mat wc = s.solve_wc(cur);
    CHECK(s.stationarity_wc(cur, wc) < 1e-10);
    Mat wh = s.solve_wh(cur, wc);
    CHECK(s.stationarity_wh(cur, wc, wh) < 1e-10);
  }
}

TEST_CASE("lambda update arithmetic") {
  auto graph = AgentGraph::from_edges(2, {{0, 1}});
  ConsensusConstraint a(graph, 2, 1);
  Mat w0(2, 1), w1(2, 1), lam(2, 1);
  w0 << 1.0, 0.0;
  w1 << 0.0, 1.0;
  lam << 0.5, 0.5;

  auto next = update_lambda(a, {lam}, {w0, w1}, 0.5, 2.0);  // gamma rho = 1
  CHECK((next[0] - (lam + (w0 - w1))).cwiseAbs().maxCoeff() < 1e-15);

  auto fixed = update_lambda(a, {lam}, {w0, w0}, 0.5, 2.0);
  CHECK((fixed[0] - lam).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single agent converges to the ridge closed form") {
  auto graph = AgentGraph::from_edges(1, {});
  auto ds = make_synthetic_dataset(3, 2, 6, 101);
  std::vector<LossModel> losses = {LossModel::least_square(ds)};
  double mu1 = 0.4, mu2 = 0.9;
  auto p = Problem::make(graph, losses, RegularizationParams::make(mu1, mu2, 1, 1));

  // Stationarity: S v - D + mu1 wc = 0 and S v - D + mu2 wh = 0 force
  // wc = (mu2/mu1) wh and [S (mu1+mu2)/mu1 + mu2 I] wh = D.
  const Mat& s = p.losses[0].quad();
  const Mat& d = p.losses[0].linear();
  Mat lhs = s * ((mu1 + mu2) / mu1) + mu2 * Mat::Identity(3, 3);
  Mat wh_star = lhs.ldlt().solve(d);
  Mat wc_star = (mu2 / mu1) * wh_star;

  SolverParams params = SolverParams::uniform(1, 1.0, 1.0, 1.0, 1.0, 4000);
  params.consensus_tol = 0.0;
  auto [final, trace] = run_admm(p, params, random_iterate(p, 3));
  CHECK((final.wc[0] - wc_star).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((final.wh[0] - wh_star).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("optimum with recovered multiplier is a fixed point") {
  auto p = small_problem(5, 7, 3, 1, 5, 41, 0.6, 0.8);
  auto ref = solve_kkt_direct(p);
  auto lambda_star = recover_multiplier(p, ref.wc, ref.wh);

  // Multiplier stationarity: A^T lambda* = -(grad_i + mu1 wc*_i).
  auto at = p.constraint().adjoint(lambda_star);
  for (int i = 0; i < 5; ++i) {
    auto [gc, gh] = p.losses[i].gradient(ref.wc[i], ref.wh[i]);
    CHECK((at[i] + gc + p.reg.mu1 * ref.wc[i]).cwiseAbs().maxCoeff() < 1e-8);
  }

  Iterate start;
  start.wc = ref.wc;
  start.wh = ref.wh;
  start.lambda = lambda_star;
  SolverParams params = SolverParams::uniform(5, 2.0, 2.0, 1.0, 1.0, 1);
  auto [after, trace] = run_admm(p, params, start);
  Iterate again = start;
  CHECK(iterate_diff(after, again) < 1e-9);
}

TEST_CASE("run_admm basics: max_iter 0, early stop, divergence") {
  auto p = small_problem(3, 3, 2, 1, 4, 51);
  Iterate init = random_iterate(p, 1);

  SolverParams none = SolverParams::uniform(3, 1.0, 1.0, 1.0, 1.0, 0);
  auto [same, trace0] = run_admm(p, none, init);
  CHECK(iterate_diff(same, init) == 0.0);
  CHECK(trace0.rows.size() == 1);
  CHECK(trace0.rows[0].k == 0);

  SolverParams loose = SolverParams::uniform(3, 1.0, 1.0, 1.0, 1.0, 100);
  loose.consensus_tol = 1e9;
  loose.step_tol = 1e9;
  auto [one, trace1] = run_admm(p, loose, init);
  CHECK(one.k == 1);
  CHECK(trace1.rows.size() == 2);

  Iterate bad = init;
  bad.wc[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  SolverParams params = SolverParams::uniform(3, 1.0, 1.0);
  try {
    run_admm(p, params, bad);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration == 0);
  }
}

TEST_CASE("parallel execution is bitwise identical to serial") {
  auto p = small_problem(6, 9, 4, 2, 7, 61);
  SolverParams params = SolverParams::uniform(6, 1.0, 1.0, 1.0, 1.0, 50);
  AdmmOptions serial, parallel;
  serial.threads = 1;
  parallel.threads = 4;
  auto [a, ta] = run_admm(p, params, random_iterate(p, 2), serial);
  auto [b, tb] = run_admm(p, params, random_iterate(p, 2), parallel);
  CHECK(iterate_diff(a, b) == 0.0);
  REQUIRE(ta.rows.size() == tb.rows.size());
  for (std::size_t k = 0; k < ta.rows.size(); ++k)
    CHECK(ta.rows[k].objective == tb.rows[k].objective);
}

TEST_CASE("consensus residual vanishes on converged runs") {
  auto p = small_problem(4, 4, 3, 1, 6, 71);
  SolverParams params = SolverParams::uniform(4, 1.0, 1.0, 1.0, 1.0, 5000);
  params.consensus_tol = 1e-9;
  params.step_tol = 1e-12;
  auto [final, trace] = run_admm(p, params, random_iterate(p, 4));
  CHECK(trace.rows.back().consensus_residual < 1e-6);
  double spread = 0.0;
  for (int i = 1; i < 4; ++i)
    spread = std::max(spread, (final.wc[i] - final.wc[0]).cwiseAbs().maxCoeff());
  CHECK(spread < 1e-6);
}

TEST_CASE("diagnostics: G-norm monotone and ergodic bound under safe params") {
  auto p = small_problem(4, 5, 3, 1, 6, 83, 1.0, 1.0);
  SolverParams params = SolverParams::uniform(4, 1.0, 1.0, 1.0, 1.0, 200);
  apply_theorem_safe(params, p);

  auto ref = solve_kkt_direct(p);
  DiagnosticsInput di;
  di.wc_star = ref.wc;
  di.wh_star = ref.wh;
  di.objective_star = ref.objective;

  Iterate init = random_iterate(p, 77);
  DiagnosticsEngine engine(p, params, di, init);
  CHECK(engine.g1dagger_min_eig() > 0.0);

  AdmmOptions opts;
  opts.reference = &di;
  auto [final, trace] = run_admm(p, params, init, opts);
  REQUIRE(trace.rows.size() == 201);
  for (std::size_t k = 0; k + 1 < trace.rows.size(); ++k) {
    double g0 = trace.rows[k].gnorm_error;
    double g1 = trace.rows[k + 1].gnorm_error;
    CHECK(g1 <= g0 * (1 + 1e-9) + 1e-12);
  }
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    CHECK(trace.rows[k].bound_lhs <= trace.rows[k].bound_rhs * (1 + 1e-9) + 1e-12);
    CHECK(std::isfinite(trace.rows[k].bound_rhs));
  }
  // 1/(2k) scaling of the bound's right-hand side.
  CHECK(trace.rows[100].bound_rhs == doctest::Approx(trace.rows[50].bound_rhs / 2).epsilon(1e-12));

  // At the reference point the G-norm error vanishes.
  Iterate at_star;
  at_star.wc = ref.wc;
  at_star.wh = ref.wh;
  at_star.lambda = engine.lambda_star();
  CHECK(engine.gnorm_error(at_star) < 1e-12);
}

TEST_CASE("trace CSV format") {
  auto p = small_problem(3, 3, 2, 1, 4, 91);
  SolverParams params = SolverParams::uniform(3, 1.0, 1.0, 1.0, 1.0, 5);
  auto [final, trace] = run_admm(p, params, random_iterate(p, 6));

  TempDir tmp("mpcache_trace");
  trace.save_csv(tmp.file("t.csv"));
  std::ifstream in(tmp.file("t.csv"));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "k,objective,consensus_residual,gnorm_error,bound_lhs,bound_rhs");
  int rows = 0;
  bool saw_nan = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find("nan") != std::string::npos) saw_nan = true;
  }
  CHECK(rows == 6);
  CHECK(saw_nan);  // no reference supplied -> gnorm column is nan
}

TEST_CASE("random iterates are seeded and have zero multipliers") {
  auto p = small_problem(3, 3, 2, 1, 4, 97);
  auto a = random_iterate(p, 9);
  auto b = random_iterate(p, 9);
  auto c = random_iterate(p, 10);
  CHECK(iterate_diff(a, b) == 0.0);
  CHECK(iterate_diff(a, c) != 0.0);
  for (const auto& l : a.lambda) CHECK(l.norm() == 0.0);
  for (const auto& w : a.wc) {
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.maxCoeff() < 1.0);
  }
}

#include "mpcache/solver.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <thread>

#include "mpcache/rng.hpp"

namespace mpcache {

namespace {

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

bool finite_blocks(const std::vector<Mat>& blocks) {
  for (const auto& b : blocks)
    if (!b.allFinite()) return false;
  return true;
}

std::string trace_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Problem Problem::make(AgentGraph graph, std::vector<LossModel> losses,
                      RegularizationParams reg) {
  reg.validate();
  if (static_cast<int>(losses.size()) != graph.agent_count())
    throw DimensionError("problem: " + std::to_string(losses.size()) + " losses for " +
                         std::to_string(graph.agent_count()) + " agents");
  int n = losses.at(0).feature_dim();
  int nu = losses.at(0).target_dim();
  for (const auto& l : losses)
    if (l.feature_dim() != n || l.target_dim() != nu)
      throw DimensionError("problem: losses disagree on block dimensions");
  Problem p(std::move(graph));
  p.constraint_ = std::make_shared<const ConsensusConstraint>(p.graph, n, nu);
  p.losses = std::move(losses);
  p.reg = reg;
  p.feature_dim = n;
  p.target_dim = nu;
  return p;
}

double Problem::objective(const std::vector<Mat>& wc, const std::vector<Mat>& wh) const {
  constraint().check_agent_blocks(wc, "objective wc");
  constraint().check_agent_blocks(wh, "objective wh");
  double val = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    val += losses[i].value(wc[i], wh[i]);
    val += 0.5 * reg.mu1 * wc[i].squaredNorm();
    val += 0.5 * reg.mu2 * wh[i].squaredNorm();
  }
  return val;
}

std::vector<double> Problem::lipschitz_constants() const {
  std::vector<double> c;
  c.reserve(losses.size());
  for (const auto& l : losses) c.push_back(l.lipschitz());
  return c;
}

SolverParams SolverParams::uniform(int agent_count, double tau, double zeta, double rho,
                                   double gamma, int max_iter) {
  SolverParams p;
  p.rho = rho;
  p.gamma = gamma;
  p.tau.assign(agent_count, tau);
  p.zeta.assign(agent_count, zeta);
  p.max_iter = max_iter;
  return p;
}

ParamThresholds safe_thresholds(const AgentGraph& graph, const std::vector<double>& lipschitz,
                                double modulus, int feature_dim, double rho, double gamma) {
  if (gamma <= 0.0 || gamma >= 2.0)
    throw ParameterError("gamma must lie in (0, 2), got " + std::to_string(gamma));
  if (rho <= 0.0) throw ParameterError("rho must be positive, got " + std::to_string(rho));
  if (modulus <= 0.0) throw ParameterError("strong convexity modulus must be positive");
  int N = graph.agent_count();
  if (static_cast<int>(lipschitz.size()) != N)
    throw DimensionError("safe_thresholds: lipschitz vector length mismatch");
  ParamThresholds th;
  th.tau_min.resize(N);
  th.zeta_min.resize(N);
  double root_n = std::sqrt(static_cast<double>(feature_dim));
  for (int i = 0; i < N; ++i) {
    double d = graph.degree(i);
    double jacobi = rho * d + 4.0 * (N - 1) * rho * root_n;
    double stepsize = rho * (N / (2.0 - gamma) - 1.0) * d;
    th.tau_min[i] = std::max(jacobi, stepsize);
    double c = lipschitz[i];
    th.zeta_min[i] = (c / modulus) * (c + modulus);
  }
  return th;
}

ParamReport validate_params(const SolverParams& params, const AgentGraph& graph,
                            const std::vector<double>& lipschitz, double modulus,
                            int feature_dim) {
  int N = graph.agent_count();
  if (static_cast<int>(params.tau.size()) != N || static_cast<int>(params.zeta.size()) != N)
    throw DimensionError("validate_params: tau/zeta must have one entry per agent");
  for (int i = 0; i < N; ++i)
    if (params.tau[i] <= 0.0 || params.zeta[i] <= 0.0)
      throw ParameterError("tau and zeta must be positive");

  ParamReport rep;
  rep.rho = params.rho;
  rep.gamma = params.gamma;
  rep.thresholds =
      safe_thresholds(graph, lipschitz, modulus, feature_dim, params.rho, params.gamma);
  for (int i = 0; i < N; ++i) {
    if (!(params.tau[i] > rep.thresholds.tau_min[i]))
      rep.violations.push_back("tau[" + std::to_string(i) + "] = " +
                               std::to_string(params.tau[i]) + " <= threshold " +
                               std::to_string(rep.thresholds.tau_min[i]));
    if (!(params.zeta[i] > rep.thresholds.zeta_min[i]))
      rep.violations.push_back("zeta[" + std::to_string(i) + "] = " +
                               std::to_string(params.zeta[i]) + " <= threshold " +
                               std::to_string(rep.thresholds.zeta_min[i]));
  }
  rep.ok = rep.violations.empty();
  return rep;
}

void apply_theorem_safe(SolverParams& params, const Problem& problem, double margin) {
  if (margin <= 1.0) throw ParameterError("theorem-safe margin must exceed 1");
  auto th = safe_thresholds(problem.graph, problem.lipschitz_constants(), problem.reg.modulus,
                            problem.feature_dim, params.rho, params.gamma);
  int N = problem.graph.agent_count();
  params.tau.resize(N);
  params.zeta.resize(N);
  for (int i = 0; i < N; ++i) {
    params.tau[i] = th.tau_min[i] > 0.0 ? margin * th.tau_min[i] : 1.0;
    params.zeta[i] = th.zeta_min[i] > 0.0 ? margin * th.zeta_min[i] : 1.0;
  }
}

Iterate zero_iterate(const Problem& problem) {
  Iterate it;
  int n = problem.feature_dim, nu = problem.target_dim;
  it.wc.assign(problem.graph.agent_count(), Mat::Zero(n, nu));
  it.wh.assign(problem.graph.agent_count(), Mat::Zero(n, nu));
  it.lambda.assign(problem.graph.edge_count(), Mat::Zero(n, nu));
  return it;
}

Iterate random_iterate(const Problem& problem, std::uint64_t seed) {
  Iterate it = zero_iterate(problem);
  Rng rng(seed, /*tag=*/0x696e6974ULL);
  for (auto& blk : it.wc)
    for (int c = 0; c < blk.cols(); ++c)
      for (int r = 0; r < blk.rows(); ++r) blk(r, c) = rng.uniform();
  for (auto& blk : it.wh)
    for (int c = 0; c < blk.cols(); ++c)
      for (int r = 0; r < blk.rows(); ++r) blk(r, c) = rng.uniform();
  return it;
}

AgentSubproblem::AgentSubproblem(int agent, const Problem& problem, const SolverParams& params)
    : agent_(agent), problem_(&problem) {
  int N = problem.graph.agent_count();
  if (agent < 0 || agent >= N) throw ParameterError("agent index out of range");
  if (static_cast<int>(params.tau.size()) != N || static_cast<int>(params.zeta.size()) != N)
    throw DimensionError("solver params: tau/zeta must have one entry per agent");
  tau_ = params.tau[agent];
  zeta_ = params.zeta[agent];
  rho_ = params.rho;
  if (params.gamma <= 0.0 || params.gamma >= 2.0)
    throw ParameterError("gamma must lie in (0, 2)");
  if (rho_ <= 0.0) throw ParameterError("rho must be positive");
  if (tau_ <= 0.0 || zeta_ <= 0.0) throw ParameterError("tau and zeta must be positive");

  const LossModel& loss = problem.losses[agent];
  int n = problem.feature_dim;
  double d = problem.graph.degree(agent);
  double kappa = loss.kappa();
  mat_wc_ = loss.quad() +
            (problem.reg.mu1 + kappa + rho_ * d + tau_) * Mat::Identity(n, n);
  mat_wh_ = loss.quad() + (problem.reg.mu2 + kappa + zeta_) * Mat::Identity(n, n);
  llt_wc_.compute(mat_wc_);
  llt_wh_.compute(mat_wh_);
  if (llt_wc_.info() != Eigen::Success || llt_wh_.info() != Eigen::Success)
    throw ParameterError("agent subproblem system is not positive definite");
}

Mat AgentSubproblem::rhs_wc(const Iterate& cur) const {
  const LossModel& loss = problem_->losses[agent_];
  const AgentGraph& g = problem_->graph;
  Mat rhs = loss.linear() + loss.kappa() * loss.anchor() -
            loss.quad() * cur.wh[agent_] - loss.kappa() * cur.wh[agent_] +
            tau_ * cur.wc[agent_];
  for (int j : g.neighbors(agent_)) {
    rhs += rho_ * cur.wc[j];
    int e = g.edge_index(agent_, j);
    if (agent_ < j)
      rhs -= cur.lambda[e];
    else
      rhs += cur.lambda[e];
  }
  return rhs;
}

Mat AgentSubproblem::solve_wc(const Iterate& cur) const {
  return llt_wc_.solve(rhs_wc(cur));
}

Mat AgentSubproblem::rhs_wh(const Iterate& cur, const Mat& wc_new) const {
  const LossModel& loss = problem_->losses[agent_];
  return loss.linear() + loss.kappa() * loss.anchor() - loss.quad() * wc_new -
         loss.kappa() * wc_new + zeta_ * cur.wh[agent_];
}

Mat AgentSubproblem::solve_wh(const Iterate& cur, const Mat& wc_new) const {
  return llt_wh_.solve(rhs_wh(cur, wc_new));
}

double AgentSubproblem::stationarity_wc(const Iterate& cur, const Mat& wc_new) const {
  Mat rhs = rhs_wc(cur);
  return (mat_wc_ * wc_new - rhs).norm() / (1.0 + rhs.norm());
}

double AgentSubproblem::stationarity_wh(const Iterate& cur, const Mat& wc_new,
                                        const Mat& wh_new) const {
  Mat rhs = rhs_wh(cur, wc_new);
  return (mat_wh_ * wh_new - rhs).norm() / (1.0 + rhs.norm());
}

std::vector<Mat> update_lambda(const ConsensusConstraint& constraint,
                               const std::vector<Mat>& lambda, const std::vector<Mat>& wc_new,
                               double gamma, double rho) {
  if (gamma <= 0.0 || gamma >= 2.0) throw ParameterError("gamma must lie in (0, 2)");
  if (rho <= 0.0) throw ParameterError("rho must be positive");
  constraint.check_edge_blocks(lambda, "lambda update");
  std::vector<Mat> res = constraint.apply(wc_new);
  for (std::size_t e = 0; e < res.size(); ++e) res[e] = lambda[e] + gamma * rho * res[e];
  return res;
}

void RunTrace::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace: " + path);
  out << "k,objective,consensus_residual,gnorm_error,bound_lhs,bound_rhs\n";
  for (const auto& r : rows)
    out << r.k << ',' << trace_num(r.objective) << ',' << trace_num(r.consensus_residual)
        << ',' << trace_num(r.gnorm_error) << ',' << trace_num(r.bound_lhs) << ','
        << trace_num(r.bound_rhs) << '\n';
}

std::vector<Mat> recover_multiplier(const Problem& problem, const std::vector<Mat>& wc_star,
                                    const std::vector<Mat>& wh_star) {
  const AgentGraph& g = problem.graph;
  int N = g.agent_count();
  int n = problem.feature_dim, nu = problem.target_dim;
  problem.constraint().check_agent_blocks(wc_star, "recover_multiplier wc");
  problem.constraint().check_agent_blocks(wh_star, "recover_multiplier wh");

  Mat b(N, n * nu);
  for (int i = 0; i < N; ++i) {
    auto [gc, gh] = problem.losses[i].gradient(wc_star[i], wh_star[i]);
    Mat bi = -(gc + problem.reg.mu1 * wc_star[i]);
    b.row(i) = Eigen::Map<const Eigen::VectorXd>(bi.data(), n * nu).transpose();
  }

  // Laplacian system L v = b solved through the deflated SPD matrix
  // L + (1/N) 1 1^T; b is (numerically) orthogonal to 1 at a KKT point, so
  // the solution is the minimum-norm one and lambda_e = v_i - v_j.
  Mat lap = Mat::Constant(N, N, 1.0 / N);
  for (auto& [i, j] : g.edges()) {
    lap(i, i) += 1.0;
    lap(j, j) += 1.0;
    lap(i, j) -= 1.0;
    lap(j, i) -= 1.0;
  }
  Eigen::LLT<Mat> llt(lap);
  if (llt.info() != Eigen::Success)
    throw OracleError("multiplier recovery: Laplacian factorization failed");
  Mat v = llt.solve(b);

  std::vector<Mat> lambda;
  lambda.reserve(g.edge_count());
  for (auto& [i, j] : g.edges()) {
    Eigen::VectorXd diff = (v.row(i) - v.row(j)).transpose();
    lambda.push_back(Eigen::Map<const Mat>(diff.data(), n, nu));
  }
  return lambda;
}

DiagnosticsEngine::DiagnosticsEngine(const Problem& problem, const SolverParams& params,
                                     const DiagnosticsInput& ref, const Iterate& init)
    : problem_(&problem), params_(params), ref_(ref) {
  problem.constraint().check_agent_blocks(ref.wc_star, "diagnostics wc_star");
  problem.constraint().check_agent_blocks(ref.wh_star, "diagnostics wh_star");
  lambda_star_ = recover_multiplier(problem, ref.wc_star, ref.wh_star);

  int N = problem.graph.agent_count();
  sum_wc_.assign(N, Mat::Zero(problem.feature_dim, problem.target_dim));
  sum_wh_.assign(N, Mat::Zero(problem.feature_dim, problem.target_dim));

  // ||WC^0 - WC*||_{G1+}^2 + ||WH^0 - WH*||_{G2}^2 with
  // ||V||_{G1+}^2 = sum_i (rho d_i + tau_i)||v_i||^2 - rho sum_(i,j) ||v_i - v_j||^2.
  double acc = 0.0;
  for (int i = 0; i < N; ++i) {
    double di = problem.graph.degree(i);
    acc += (params.rho * di + params.tau[i]) * (init.wc[i] - ref.wc_star[i]).squaredNorm();
    acc += params.zeta[i] * (init.wh[i] - ref.wh_star[i]).squaredNorm();
  }
  for (auto& [i, j] : problem.graph.edges())
    acc -= params.rho *
           ((init.wc[i] - ref.wc_star[i]) - (init.wc[j] - ref.wc_star[j])).squaredNorm();
  bound_numerator_ = acc;
}

double DiagnosticsEngine::gnorm_error(const Iterate& iter) const {
  const Problem& p = *problem_;
  double acc = 0.0;
  for (int i = 0; i < p.graph.agent_count(); ++i) {
    double di = p.graph.degree(i);
    acc += (params_.rho * di + params_.tau[i]) *
           (iter.wc[i] - ref_.wc_star[i]).squaredNorm();
    acc += params_.zeta[i] * (iter.wh[i] - ref_.wh_star[i]).squaredNorm();
  }
  for (int e = 0; e < p.graph.edge_count(); ++e)
    acc += (iter.lambda[e] - lambda_star_[e]).squaredNorm() / (params_.gamma * params_.rho);
  return acc;
}

void DiagnosticsEngine::push(const Iterate& iter, TraceRow& row) {
  row.gnorm_error = gnorm_error(iter);
  for (std::size_t i = 0; i < sum_wc_.size(); ++i) {
    sum_wc_[i] += iter.wc[i];
    sum_wh_[i] += iter.wh[i];
  }
  int k = iter.k;
  if (k <= 0) throw ParameterError("diagnostics push expects k >= 1");
  std::vector<Mat> avg_wc(sum_wc_.size()), avg_wh(sum_wh_.size());
  for (std::size_t i = 0; i < sum_wc_.size(); ++i) {
    avg_wc[i] = sum_wc_[i] / k;
    avg_wh[i] = sum_wh_[i] / k;
  }
  row.bound_lhs = problem_->objective(avg_wc, avg_wh) - ref_.objective_star;
  row.bound_rhs = bound_numerator_ / (2.0 * k);
}

double DiagnosticsEngine::g1dagger_min_eig() const {
  int N = problem_->graph.agent_count();
  Mat m = Mat::Zero(N, N);
  for (int i = 0; i < N; ++i) m(i, i) = params_.tau[i];
  for (auto& [i, j] : problem_->graph.edges()) {
    m(i, j) += params_.rho;
    m(j, i) += params_.rho;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

std::pair<Iterate, RunTrace> run_admm(const Problem& problem, const SolverParams& params,
                                      Iterate init, const AdmmOptions& options) {
  const ConsensusConstraint& constraint = problem.constraint();
  constraint.check_agent_blocks(init.wc, "init wc");
  constraint.check_agent_blocks(init.wh, "init wh");
  constraint.check_edge_blocks(init.lambda, "init lambda");
  if (params.max_iter < 0) throw ParameterError("max_iter must be nonnegative");

  int N = problem.graph.agent_count();
  std::vector<AgentSubproblem> subs;
  subs.reserve(N);
  for (int i = 0; i < N; ++i) subs.emplace_back(i, problem, params);

  if (!finite_blocks(init.wc) || !finite_blocks(init.wh) || !finite_blocks(init.lambda))
    throw DivergenceError("non-finite entry in the initial iterate", 0);

  std::optional<DiagnosticsEngine> diag;
  if (options.reference) diag.emplace(problem, params, *options.reference, init);

  Iterate cur = std::move(init);
  cur.k = 0;
  RunTrace trace;
  double nan = std::numeric_limits<double>::quiet_NaN();
  {
    TraceRow row;
    row.k = 0;
    row.objective = problem.objective(cur.wc, cur.wh);
    row.consensus_residual = constraint.residual_norm(cur.wc);
    row.gnorm_error = diag ? diag->gnorm_error(cur) : nan;
    row.bound_lhs = nan;
    row.bound_rhs = nan;
    trace.rows.push_back(row);
  }

  std::vector<Mat> wc_new(N), wh_new(N);
  for (int k = 1; k <= params.max_iter; ++k) {
    parallel_for(N, options.threads, [&](int i) { wc_new[i] = subs[i].solve_wc(cur); });
    std::vector<Mat> lambda_new =
        update_lambda(constraint, cur.lambda, wc_new, params.gamma, params.rho);
    parallel_for(N, options.threads,
                 [&](int i) { wh_new[i] = subs[i].solve_wh(cur, wc_new[i]); });

    double step_sq = 0.0;
    for (int i = 0; i < N; ++i)
      step_sq += (wc_new[i] - cur.wc[i]).squaredNorm() + (wh_new[i] - cur.wh[i]).squaredNorm();

    cur.wc = wc_new;
    cur.wh = wh_new;
    cur.lambda = std::move(lambda_new);
    cur.k = k;

    if (!finite_blocks(cur.wc) || !finite_blocks(cur.wh) || !finite_blocks(cur.lambda))
      throw DivergenceError("non-finite iterate at iteration " + std::to_string(k), k);

    TraceRow row;
    row.k = k;
    row.objective = problem.objective(cur.wc, cur.wh);
    row.consensus_residual = constraint.residual_norm(cur.wc);
    row.gnorm_error = nan;
    row.bound_lhs = nan;
    row.bound_rhs = nan;
    if (diag) diag->push(cur, row);
    trace.rows.push_back(row);
    if (options.on_iterate) options.on_iterate(cur);

    bool want_stop = params.consensus_tol > 0.0 || params.step_tol > 0.0;
    bool res_ok = params.consensus_tol <= 0.0 || row.consensus_residual < params.consensus_tol;
    bool step_ok = params.step_tol <= 0.0 || std::sqrt(step_sq) < params.step_tol;
    if (want_stop && res_ok && step_ok) break;
  }
  return {std::move(cur), std::move(trace)};
}

}  // namespace mpcache

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "mpcache/model.hpp"
#include "mpcache/topology.hpp"

namespace mpcache {

// Decentralized learning problem over a connected agent graph:
//
//   min sum_i [ f_i(wc_i, wh_i) + mu1/2 ||wc_i||^2 + mu2/2 ||wh_i||^2 ]
//   s.t. A WC = 0  (edge-wise consensus of the shared blocks)
//
// One LossModel per agent; all weight blocks are n x nu.
struct Problem {
  AgentGraph graph;
  std::vector<LossModel> losses;
  RegularizationParams reg;
  int feature_dim = 0;
  int target_dim = 0;

  static Problem make(AgentGraph graph, std::vector<LossModel> losses, RegularizationParams reg);

  const ConsensusConstraint& constraint() const { return *constraint_; }
  double objective(const std::vector<Mat>& wc, const std::vector<Mat>& wh) const;
  std::vector<double> lipschitz_constants() const;

 private:
  explicit Problem(AgentGraph g) : graph(std::move(g)) {}
  std::shared_ptr<const ConsensusConstraint> constraint_;
};

// Algorithm parameters. tau/zeta are per-agent proximal weights; rho the
// penalty, gamma the dual step scale. Tolerances of 0 disable early stopping.
struct SolverParams {
  double rho = 1.0;
  double gamma = 1.0;
  std::vector<double> tau;
  std::vector<double> zeta;
  int max_iter = 300;
  double consensus_tol = 0.0;
  double step_tol = 0.0;

  static SolverParams uniform(int agent_count, double tau, double zeta, double rho = 1.0,
                              double gamma = 1.0, int max_iter = 300);
};

// Strict lower thresholds behind the convergence guarantee:
//   zeta_i > (C_i/m)(C_i + m)
//   tau_i  > max{ rho d_i + 4 (N-1) rho sqrt(n), rho (N/(2-gamma) - 1) d_i }
struct ParamThresholds {
  std::vector<double> tau_min;
  std::vector<double> zeta_min;
};
ParamThresholds safe_thresholds(const AgentGraph& graph, const std::vector<double>& lipschitz,
                                double modulus, int feature_dim, double rho, double gamma);

struct ParamReport {
  bool ok = true;
  double rho = 0.0;
  double gamma = 0.0;
  ParamThresholds thresholds;
  std::vector<std::string> violations;
};

// Checks gamma in (0,2) and rho > 0 (hard errors) and the per-agent strict
// inequalities (soft: reported, not thrown).
ParamReport validate_params(const SolverParams& params, const AgentGraph& graph,
                            const std::vector<double>& lipschitz, double modulus,
                            int feature_dim);

// Overwrites tau/zeta with margin * threshold (margin > 1).
void apply_theorem_safe(SolverParams& params, const Problem& problem, double margin = 1.05);

// Algorithm state: shared blocks wc (one per agent), task blocks wh, edge
// multipliers lambda, iteration counter.
struct Iterate {
  std::vector<Mat> wc;
  std::vector<Mat> wh;
  std::vector<Mat> lambda;
  int k = 0;
};

Iterate zero_iterate(const Problem& problem);
// wc, wh entries i.i.d. U(0,1); lambda zero.
Iterate random_iterate(const Problem& problem, std::uint64_t seed);

// Per-agent subproblem solver with cached Cholesky factors. The two system
// matrices are constant across iterations:
//   wc: (S_i + (mu1 + kappa_i + rho d_i + tau_i) I) wc =
//       D_i + kappa_i a_i - (S_i + kappa_i I) wh_i^k - At_i(lambda^k)
//       + rho sum_{j in V_i} wc_j^k + tau_i wc_i^k
//   wh: (S_i + (mu2 + kappa_i + zeta_i) I) wh =
//       D_i + kappa_i a_i - (S_i + kappa_i I) wc_i^{k+1} + zeta_i wh_i^k
// The wc sweep is Jacobi (neighbor blocks and multipliers from iteration k);
// wh and lambda use the fresh wc.
class AgentSubproblem {
 public:
  AgentSubproblem(int agent, const Problem& problem, const SolverParams& params);

  Mat solve_wc(const Iterate& cur) const;
  Mat solve_wh(const Iterate& cur, const Mat& wc_new) const;

  // Relative residuals ||M x - rhs|| / (1 + ||rhs||) of the optimality
  // systems, for stationarity checks.
  double stationarity_wc(const Iterate& cur, const Mat& wc_new) const;
  double stationarity_wh(const Iterate& cur, const Mat& wc_new, const Mat& wh_new) const;

 private:
  Mat rhs_wc(const Iterate& cur) const;
  Mat rhs_wh(const Iterate& cur, const Mat& wc_new) const;

  int agent_;
  const Problem* problem_;
  double tau_, zeta_, rho_;
  Mat mat_wc_, mat_wh_;
  Eigen::LLT<Mat> llt_wc_, llt_wh_;
};

// lambda_e^{k+1} = lambda_e^k + gamma rho (wc_i^{k+1} - wc_j^{k+1}).
std::vector<Mat> update_lambda(const ConsensusConstraint& constraint,
                               const std::vector<Mat>& lambda, const std::vector<Mat>& wc_new,
                               double gamma, double rho);

// Optional per-iteration diagnostics against a known optimum.
struct DiagnosticsInput {
  std::vector<Mat> wc_star;  // consensus optimum, one block per agent (all equal)
  std::vector<Mat> wh_star;
  double objective_star = 0.0;
};

struct TraceRow {
  int k = 0;
  double objective = 0.0;
  double consensus_residual = 0.0;
  double gnorm_error = 0.0;  // NaN when no reference was supplied
  double bound_lhs = 0.0;    // F(Zbar^k) - F*, NaN when unavailable
  double bound_rhs = 0.0;    // (1/2k)(||WC^0 - WC*||_{G1+}^2 + ||WH^0 - WH*||_{G2}^2)
};

struct RunTrace {
  std::vector<TraceRow> rows;
  void save_csv(const std::string& path) const;
};

// Incremental diagnostics: G-norm distance to a KKT point and the ergodic
// objective bound. The multiplier lambda* is recovered from the stationarity
// of the wc blocks at the optimum (minimum-norm solution of the edge system).
class DiagnosticsEngine {
 public:
  DiagnosticsEngine(const Problem& problem, const SolverParams& params,
                    const DiagnosticsInput& ref, const Iterate& init);

  // Call once per iterate (k = 1, 2, ...) after the dual update.
  void push(const Iterate& iter, TraceRow& row);
  // G-norm error of an arbitrary iterate (also used for k = 0).
  double gnorm_error(const Iterate& iter) const;

  const std::vector<Mat>& lambda_star() const { return lambda_star_; }
  // Smallest eigenvalue of diag(tau) + rho Adj; positive iff the ergodic
  // bound's primal seminorm G1+ is positive definite.
  double g1dagger_min_eig() const;

 private:
  const Problem* problem_;
  SolverParams params_;
  DiagnosticsInput ref_;
  std::vector<Mat> lambda_star_;
  std::vector<Mat> sum_wc_, sum_wh_;
  double bound_numerator_ = 0.0;
};

// Recover the minimum-norm optimal multiplier from the KKT stationarity
// conditions via the graph Laplacian pseudo-inverse.
std::vector<Mat> recover_multiplier(const Problem& problem, const std::vector<Mat>& wc_star,
                                    const std::vector<Mat>& wh_star);

struct AdmmOptions {
  const DiagnosticsInput* reference = nullptr;
  int threads = 1;
  // Invoked after every completed iteration (k >= 1).
  std::function<void(const Iterate&)> on_iterate;
};

// Hybrid Jacobi (wc) / Gauss-Seidel (lambda, wh) proximal consensus solver.
// Trace row k = 0 records the initial point; one row per iteration after.
std::pair<Iterate, RunTrace> run_admm(const Problem& problem, const SolverParams& params,
                                      Iterate init, const AdmmOptions& options = {});

}  // namespace mpcache

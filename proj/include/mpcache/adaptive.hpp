#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpcache/mobility.hpp"
#include "mpcache/model.hpp"
#include "mpcache/topology.hpp"

namespace mpcache {

// Forecast-driven sample weights. For a sample l held by agent i and produced
// by terminal m with residence map R_m (expected minutes per agent over the
// next t_d):
//   phi_out[i][t][l] = R_m[j_t] / t_d      for the t-th neighbor j_t of i
//   phi_local[i][l]  = 1 - sum_t phi_out[i][t][l]
// so each sample's mass is a partition of unity across {i} u V_i.
struct AdaptiveWeights {
  std::vector<std::vector<double>> phi_local;
  std::vector<std::vector<std::vector<double>>> phi_out;  // [agent][neighbor idx][sample]
};

// forecasts[m] must be the forecast of terminal m; datasets[i].mt_of_sample
// selects the forecast per sample (entries must be valid indices).
AdaptiveWeights compute_phi(const std::vector<MobilityForecast>& forecasts,
                            const std::vector<AgentDataset>& datasets, const AgentGraph& graph,
                            double t_d);

// Combination coefficients c(i, j) = (1/d_i)(1 - exp(-upsilon * flow(i, j)))
// where flow aggregates the expected residence at j of the terminals
// currently associated with agent i. Zero off-neighborhood, bounded by 1/d_i.
struct CombinerMatrix {
  Mat c;  // N x N, row i holds c(i, j)
  double upsilon = 1.0;
};

CombinerMatrix compute_combiners(const std::vector<MobilityForecast>& forecasts,
                                 const AgentGraph& graph, double upsilon);

// Ridge fit of the model agent i trains for neighbor j from the outbound
// slice of its own data:
//   ((1/b) X Phi_j X^T + mu12 I) w = (1/b) X Phi_j Y^T.
// Zero weights (or no data) give w = 0.
Mat solve_transfer_weights(const AgentDataset& ds, const std::vector<double>& phi_out_col,
                           double mu12);

// All directed transfer weights: wloc[i][t] is what agent i sends to its
// t-th neighbor.
std::vector<std::vector<Mat>> solve_all_transfer_weights(
    const std::vector<AgentDataset>& datasets, const AdaptiveWeights& phi,
    const AgentGraph& graph, double mu12);

// Augmented per-agent loss of the adaptive problem: the base loss plus
// (mu3/2) sum_j c_col[j] ||wloc_in[j] - (wc + wh)||^2 over the neighbors of
// the agent. A positive combiner with a missing transfer weight is a
// ProtocolError. Also returns the composite Lipschitz constant via
// LossModel::lipschitz().
LossModel augmented_loss(const LossModel& base, const std::vector<double>& c_col,
                         const std::vector<std::optional<Mat>>& wloc_in, double mu3);

// Convenience assembly of all agent losses for the adaptive problem.
// wloc[j][t] follows solve_all_transfer_weights layout; c_col for agent i is
// read from combiners.c(j, i).
std::vector<LossModel> build_adaptive_losses(const std::vector<AgentDataset>& datasets,
                                             const AdaptiveWeights& phi,
                                             const CombinerMatrix& combiners,
                                             const std::vector<std::vector<Mat>>& wloc,
                                             const AgentGraph& graph,
                                             const RegularizationParams& reg);

// Synthetic draws used by the convergence experiments: outbound weights and
// combiners i.i.d. U(0, 1/N), locals the partition remainder.
AdaptiveWeights random_phi(const AgentGraph& graph, const std::vector<int>& sample_counts,
                           std::uint64_t seed);
CombinerMatrix random_combiners(const AgentGraph& graph, double upsilon, std::uint64_t seed);

std::string adaptive_to_json(const AdaptiveWeights& phi, const CombinerMatrix& combiners,
                             const std::vector<std::vector<Mat>>& wloc);

}  // namespace mpcache

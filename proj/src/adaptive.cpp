#include "mpcache/adaptive.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mpcache/rng.hpp"

namespace mpcache {

AdaptiveWeights compute_phi(const std::vector<MobilityForecast>& forecasts,
                            const std::vector<AgentDataset>& datasets, const AgentGraph& graph,
                            double t_d) {
  if (t_d <= 0.0) throw ParameterError("t_d must be positive");
  int agents = graph.agent_count();
  if (static_cast<int>(datasets.size()) != agents)
    throw DimensionError("compute_phi: one dataset per agent required");

  AdaptiveWeights out;
  out.phi_local.resize(agents);
  out.phi_out.resize(agents);
  for (int i = 0; i < agents; ++i) {
    const auto& nbrs = graph.neighbors(i);
    int b = datasets[i].sample_count();
    out.phi_local[i].assign(b, 1.0);
    out.phi_out[i].assign(nbrs.size(), std::vector<double>(b, 0.0));
    if (static_cast<int>(datasets[i].mt_of_sample.size()) != b)
      throw DimensionError("compute_phi: dataset lacks per-sample terminal ids");
    for (int l = 0; l < b; ++l) {
      int m = datasets[i].mt_of_sample[l];
      if (m < 0 || m >= static_cast<int>(forecasts.size()))
        throw ProtocolError("compute_phi: sample refers to terminal " + std::to_string(m) +
                            " without a forecast");
      double outbound = 0.0;
      for (std::size_t t = 0; t < nbrs.size(); ++t) {
        auto it = forecasts[m].residence.find(nbrs[t]);
        double r = it == forecasts[m].residence.end() ? 0.0 : it->second;
        double phi = r / t_d;
        out.phi_out[i][t][l] = phi;
        outbound += phi;
      }
      if (outbound > 1.0 + 1e-12)
        throw DataError("compute_phi: outbound residence exceeds the window");
      out.phi_local[i][l] = std::max(0.0, 1.0 - outbound);
    }
  }
  return out;
}

CombinerMatrix compute_combiners(const std::vector<MobilityForecast>& forecasts,
                                 const AgentGraph& graph, double upsilon) {
  if (upsilon <= 0.0) throw ParameterError("upsilon must be positive");
  int agents = graph.agent_count();
  Mat flow = Mat::Zero(agents, agents);
  for (const auto& fc : forecasts) {
    if (fc.state < 0 || fc.state >= agents)
      throw ProtocolError("compute_combiners: forecast state out of range");
    for (const auto& [agent, minutes] : fc.residence) {
      if (agent == fc.state) continue;
      if (graph.edge_index(fc.state, agent) < 0)
        throw TopologyError("compute_combiners: residence outside the neighborhood");
      flow(fc.state, agent) += minutes;
    }
  }
  CombinerMatrix cm;
  cm.upsilon = upsilon;
  cm.c = Mat::Zero(agents, agents);
  for (int i = 0; i < agents; ++i) {
    int d = graph.degree(i);
    if (d == 0) continue;
    for (int j : graph.neighbors(i))
      cm.c(i, j) = (1.0 - std::exp(-upsilon * flow(i, j))) / d;
  }
  return cm;
}

Mat solve_transfer_weights(const AgentDataset& ds, const std::vector<double>& phi_out_col,
                           double mu12) {
  if (mu12 <= 0.0) throw ParameterError("mu12 must be positive");
  ds.validate();
  int n = ds.feature_dim(), nu = ds.target_dim(), b = ds.sample_count();
  if (static_cast<int>(phi_out_col.size()) != b)
    throw DimensionError("solve_transfer_weights: weight vector length mismatch");
  if (b == 0) return Mat::Zero(n, nu);
  for (double w : phi_out_col)
    if (!(w >= 0.0)) throw ParameterError("transfer weights must be nonnegative");

  Eigen::VectorXd phi = Eigen::Map<const Eigen::VectorXd>(phi_out_col.data(), b);
  Mat xw = ds.x * phi.asDiagonal();
  Mat s = (xw * ds.x.transpose()) / b + mu12 * Mat::Identity(n, n);
  Mat d = (xw * ds.y.transpose()) / b;
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw OracleError("transfer-weight system is not positive definite");
  return llt.solve(d);
}

std::vector<std::vector<Mat>> solve_all_transfer_weights(
    const std::vector<AgentDataset>& datasets, const AdaptiveWeights& phi,
    const AgentGraph& graph, double mu12) {
  int agents = graph.agent_count();
  if (static_cast<int>(datasets.size()) != agents ||
      static_cast<int>(phi.phi_out.size()) != agents)
    throw DimensionError("solve_all_transfer_weights: per-agent inputs required");
  std::vector<std::vector<Mat>> wloc(agents);
  for (int i = 0; i < agents; ++i) {
    const auto& nbrs = graph.neighbors(i);
    if (phi.phi_out[i].size() != nbrs.size())
      throw DimensionError("solve_all_transfer_weights: phi_out arity mismatch");
    wloc[i].reserve(nbrs.size());
    for (std::size_t t = 0; t < nbrs.size(); ++t)
      wloc[i].push_back(solve_transfer_weights(datasets[i], phi.phi_out[i][t], mu12));
  }
  return wloc;
}

LossModel augmented_loss(const LossModel& base, const std::vector<double>& c_col,
                         const std::vector<std::optional<Mat>>& wloc_in, double mu3) {
  if (c_col.size() != wloc_in.size())
    throw DimensionError("augmented_loss: combiner/transfer arity mismatch");
  std::vector<std::pair<double, Mat>> incoming;
  for (std::size_t t = 0; t < c_col.size(); ++t) {
    if (c_col[t] < 0.0) throw ParameterError("combiner must be nonnegative");
    if (c_col[t] == 0.0) continue;
    if (!wloc_in[t])
      throw ProtocolError("augmented_loss: combiner is positive but the transfer weight "
                          "was never received");
    incoming.emplace_back(c_col[t], *wloc_in[t]);
  }
  return base.with_transfer_penalty(mu3, incoming);
}

std::vector<LossModel> build_adaptive_losses(const std::vector<AgentDataset>& datasets,
                                             const AdaptiveWeights& phi,
                                             const CombinerMatrix& combiners,
                                             const std::vector<std::vector<Mat>>& wloc,
                                             const AgentGraph& graph,
                                             const RegularizationParams& reg) {
  int agents = graph.agent_count();
  if (static_cast<int>(datasets.size()) != agents ||
      static_cast<int>(phi.phi_local.size()) != agents ||
      static_cast<int>(wloc.size()) != agents)
    throw DimensionError("build_adaptive_losses: per-agent inputs required");

  std::vector<LossModel> losses;
  losses.reserve(agents);
  for (int i = 0; i < agents; ++i) {
    LossModel base = LossModel::least_square(datasets[i], phi.phi_local[i]);
    const auto& nbrs = graph.neighbors(i);
    std::vector<double> c_col;
    std::vector<std::optional<Mat>> incoming;
    for (int j : nbrs) {
      c_col.push_back(combiners.c(j, i));
      // w_loc(j -> i) sits at i's position in j's neighbor list.
      const auto& jn = graph.neighbors(j);
      auto it = std::find(jn.begin(), jn.end(), i);
      std::size_t pos = it - jn.begin();
      if (pos < wloc[j].size())
        incoming.emplace_back(wloc[j][pos]);
      else
        incoming.emplace_back(std::nullopt);
    }
    losses.push_back(augmented_loss(base, c_col, incoming, reg.mu3));
  }
  return losses;
}

AdaptiveWeights random_phi(const AgentGraph& graph, const std::vector<int>& sample_counts,
                           std::uint64_t seed) {
  int agents = graph.agent_count();
  if (static_cast<int>(sample_counts.size()) != agents)
    throw DimensionError("random_phi: one sample count per agent required");
  Rng rng(seed, /*tag=*/0x70686930ULL);
  AdaptiveWeights out;
  out.phi_local.resize(agents);
  out.phi_out.resize(agents);
  for (int i = 0; i < agents; ++i) {
    int b = sample_counts[i];
    int d = graph.degree(i);
    out.phi_local[i].assign(b, 1.0);
    out.phi_out[i].assign(d, std::vector<double>(b, 0.0));
    for (int l = 0; l < b; ++l) {
      double outbound = 0.0;
      for (int t = 0; t < d; ++t) {
        double v = rng.uniform() / agents;
        out.phi_out[i][t][l] = v;
        outbound += v;
      }
      out.phi_local[i][l] = 1.0 - outbound;
      if (out.phi_local[i][l] < 0.0)
        throw DataError("random_phi: sampled outbound mass exceeds 1");
    }
  }
  return out;
}

CombinerMatrix random_combiners(const AgentGraph& graph, double upsilon, std::uint64_t seed) {
  Rng rng(seed, /*tag=*/0x636f6d62ULL);
  int agents = graph.agent_count();
  CombinerMatrix cm;
  cm.upsilon = upsilon;
  cm.c = Mat::Zero(agents, agents);
  for (int i = 0; i < agents; ++i)
    for (int j : graph.neighbors(i))
      if (i < j) {
        cm.c(i, j) = rng.uniform() / agents;
        cm.c(j, i) = rng.uniform() / agents;
      }
  return cm;
}

std::string adaptive_to_json(const AdaptiveWeights& phi, const CombinerMatrix& combiners,
                             const std::vector<std::vector<Mat>>& wloc) {
  nlohmann::json j;
  nlohmann::json jphi = nlohmann::json::array();
  for (std::size_t i = 0; i < phi.phi_local.size(); ++i)
    jphi.push_back({{"local", phi.phi_local[i]}, {"out", phi.phi_out[i]}});
  j["phi"] = std::move(jphi);
  nlohmann::json jc = nlohmann::json::array();
  for (int i = 0; i < combiners.c.rows(); ++i) {
    std::vector<double> row(combiners.c.cols());
    for (int k = 0; k < combiners.c.cols(); ++k) row[k] = combiners.c(i, k);
    jc.push_back(row);
  }
  j["combiners"] = std::move(jc);
  j["upsilon"] = combiners.upsilon;
  nlohmann::json norms = nlohmann::json::array();
  for (const auto& per_agent : wloc) {
    std::vector<double> row;
    row.reserve(per_agent.size());
    for (const auto& w : per_agent) row.push_back(w.norm());
    norms.push_back(row);
  }
  j["transfer_norms"] = std::move(norms);
  return j.dump(1) + "\n";
}

}  // namespace mpcache

#include "mpcache/topology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mpcache/rng.hpp"

namespace mpcache {

AgentGraph AgentGraph::from_edges(int agent_count, std::vector<std::pair<int, int>> edges) {
  if (agent_count <= 0) throw TopologyError("agent_count must be positive");
  for (auto& [i, j] : edges) {
    if (i == j) throw TopologyError("self loop at agent " + std::to_string(i));
    if (i < 0 || j < 0 || i >= agent_count || j >= agent_count)
      throw TopologyError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                          ") out of range for " + std::to_string(agent_count) + " agents");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw TopologyError("duplicate edge");

  AgentGraph g;
  g.agent_count_ = agent_count;
  g.edges_ = std::move(edges);
  g.neighbors_.assign(agent_count, {});
  for (auto& [i, j] : g.edges_) {
    g.neighbors_[i].push_back(j);
    g.neighbors_[j].push_back(i);
  }
  for (auto& adj : g.neighbors_) std::sort(adj.begin(), adj.end());
  return g;
}

AgentGraph AgentGraph::random_connected(int agent_count, int edge_count, std::uint64_t seed) {
  if (agent_count <= 0) throw TopologyError("agent_count must be positive");
  std::int64_t n = agent_count;
  std::int64_t max_edges = n * (n - 1) / 2;
  if (edge_count < agent_count - 1 || edge_count > max_edges)
    throw TopologyError("edge_count " + std::to_string(edge_count) + " outside [" +
                        std::to_string(agent_count - 1) + ", " + std::to_string(max_edges) +
                        "]");

  Rng rng(seed, /*tag=*/0x746f706fULL);
  std::vector<int> order(agent_count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<std::pair<int, int>> edges;
  edges.reserve(edge_count);
  for (int k = 1; k < agent_count; ++k) {
    int anchor = order[rng.uniform_int(0, k - 1)];
    edges.emplace_back(std::min(anchor, order[k]), std::max(anchor, order[k]));
  }

  std::vector<std::vector<bool>> used(agent_count, std::vector<bool>(agent_count, false));
  for (auto& [i, j] : edges) used[i][j] = true;
  std::vector<std::pair<int, int>> pool;
  pool.reserve(max_edges - edges.size());
  for (int i = 0; i < agent_count; ++i)
    for (int j = i + 1; j < agent_count; ++j)
      if (!used[i][j]) pool.emplace_back(i, j);
  rng.shuffle(pool);
  for (std::size_t t = 0; edges.size() < static_cast<std::size_t>(edge_count); ++t)
    edges.push_back(pool[t]);

  return from_edges(agent_count, std::move(edges));
}

AgentGraph AgentGraph::grid(int side) {
  if (side <= 0) throw TopologyError("grid side must be positive");
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      int s = r * side + c;
      if (c + 1 < side) edges.emplace_back(s, s + 1);
      if (r + 1 < side) edges.emplace_back(s, s + side);
    }
  return from_edges(side * side, std::move(edges));
}

AgentGraph AgentGraph::load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list: " + path);
  std::vector<std::pair<int, int>> edges;
  int max_agent = -1;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int i, j;
    if (!(ls >> i)) continue;  // blank or comment-only line
    if (!(ls >> j)) throw DataError("edge list line with a single endpoint: " + line);
    std::string rest;
    if (ls >> rest) throw DataError("trailing tokens on edge list line: " + line);
    edges.emplace_back(i, j);
    max_agent = std::max({max_agent, i, j});
  }
  if (edges.empty()) throw DataError("edge list is empty: " + path);
  return from_edges(max_agent + 1, std::move(edges));
}

void AgentGraph::save_edge_list(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge list: " + path);
  for (auto& [i, j] : edges_) out << i << ' ' << j << '\n';
}

int AgentGraph::max_degree() const {
  int d = 0;
  for (int i = 0; i < agent_count_; ++i) d = std::max(d, degree(i));
  return d;
}

bool AgentGraph::connected() const {
  if (agent_count_ == 0) return false;
  std::vector<bool> seen(agent_count_, false);
  std::deque<int> queue{0};
  seen[0] = true;
  int count = 1;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : neighbors_[v])
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        queue.push_back(w);
      }
  }
  return count == agent_count_;
}

int AgentGraph::edge_index(int i, int j) const {
  if (i > j) std::swap(i, j);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), std::make_pair(i, j));
  if (it == edges_.end() || *it != std::make_pair(i, j)) return -1;
  return static_cast<int>(it - edges_.begin());
}

std::vector<int> AgentGraph::shortest_path(int from, int to) const {
  if (from < 0 || from >= agent_count_ || to < 0 || to >= agent_count_)
    throw TopologyError("shortest_path endpoint out of range");
  if (from == to) return {from};
  std::vector<int> parent(agent_count_, -1);
  std::deque<int> queue{from};
  parent[from] = from;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : neighbors_[v]) {
      if (parent[w] != -1) continue;
      parent[w] = v;
      if (w == to) {
        std::vector<int> path{to};
        while (path.back() != from) path.push_back(parent[path.back()]);
        std::reverse(path.begin(), path.end());
        return path;
      }
      queue.push_back(w);
    }
  }
  return {};
}

ConsensusConstraint::ConsensusConstraint(const AgentGraph& graph, int block_rows,
                                         int block_cols)
    : graph_(graph), rows_(block_rows), cols_(block_cols) {
  if (block_rows <= 0 || block_cols <= 0)
    throw DimensionError("constraint block dimensions must be positive");
  if (!graph.connected())
    throw TopologyError("consensus constraint requires a connected graph");
}

void ConsensusConstraint::check_agent_blocks(const std::vector<Mat>& w,
                                             const char* what) const {
  if (static_cast<int>(w.size()) != graph_.agent_count())
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(graph_.agent_count()) + " agent blocks, got " +
                         std::to_string(w.size()));
  for (const auto& blk : w)
    if (blk.rows() != rows_ || blk.cols() != cols_)
      throw DimensionError(std::string(what) + ": agent block is " +
                           std::to_string(blk.rows()) + "x" + std::to_string(blk.cols()) +
                           ", expected " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
}

void ConsensusConstraint::check_edge_blocks(const std::vector<Mat>& lambda,
                                            const char* what) const {
  if (static_cast<int>(lambda.size()) != graph_.edge_count())
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(graph_.edge_count()) + " edge blocks, got " +
                         std::to_string(lambda.size()));
  for (const auto& blk : lambda)
    if (blk.rows() != rows_ || blk.cols() != cols_)
      throw DimensionError(std::string(what) + ": edge block is " +
                           std::to_string(blk.rows()) + "x" + std::to_string(blk.cols()) +
                           ", expected " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
}

std::vector<Mat> ConsensusConstraint::apply(const std::vector<Mat>& w) const {
  check_agent_blocks(w, "constraint apply");
  std::vector<Mat> out;
  out.reserve(graph_.edge_count());
  for (auto& [i, j] : graph_.edges()) out.push_back(w[i] - w[j]);
  return out;
}

std::vector<Mat> ConsensusConstraint::adjoint(const std::vector<Mat>& lambda) const {
  check_edge_blocks(lambda, "constraint adjoint");
  std::vector<Mat> out(graph_.agent_count(), Mat::Zero(rows_, cols_));
  const auto& edges = graph_.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    out[edges[e].first] += lambda[e];
    out[edges[e].second] -= lambda[e];
  }
  return out;
}

double ConsensusConstraint::residual_norm(const std::vector<Mat>& w) const {
  check_agent_blocks(w, "constraint residual");
  double sq = 0.0;
  for (auto& [i, j] : graph_.edges()) sq += (w[i] - w[j]).squaredNorm();
  return std::sqrt(sq);
}

}  // namespace mpcache

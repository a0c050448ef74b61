#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mpcache/errors.hpp"

namespace mpcache {

using Mat = Eigen::MatrixXd;

// Undirected communication graph over agents 0..N-1. Edges are canonical
// (i < j) and sorted; adjacency lists are sorted ascending. Shape invariants
// (range, no self loops, no duplicates) are enforced at construction;
// connectivity is checked where the algorithms require it.
class AgentGraph {
 public:
  static AgentGraph from_edges(int agent_count, std::vector<std::pair<int, int>> edges);

  // Uniform random connected graph: random spanning tree plus extra edges
  // drawn uniformly from the remaining pairs. Requires N-1 <= E <= N(N-1)/2.
  static AgentGraph random_connected(int agent_count, int edge_count, std::uint64_t seed);

  // side x side lattice with 4-neighborhood, cell (r, c) -> r*side + c.
  static AgentGraph grid(int side);

  // Text file with one "i j" pair per line (0-based). '#' starts a comment.
  static AgentGraph load_edge_list(const std::string& path);
  void save_edge_list(const std::string& path) const;

  int agent_count() const { return agent_count_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(i); }
  int degree(int i) const { return static_cast<int>(neighbors_.at(i).size()); }
  int max_degree() const;
  bool connected() const;

  // Index of edge {i, j} in edges(), or -1 if absent.
  int edge_index(int i, int j) const;

  // Hop-shortest path between two agents (BFS, ties broken by smaller
  // neighbor index). Empty if unreachable.
  std::vector<int> shortest_path(int from, int to) const;

 private:
  AgentGraph() = default;
  int agent_count_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> neighbors_;
};

// Consensus operator A of the edge-difference constraint A W = 0. Kept
// structural: one block row per edge e = (i, j) with i < j, contributing
// +W_i - W_j. Never materialized as a dense matrix.
class ConsensusConstraint {
 public:
  // Throws TopologyError if the graph is disconnected (the constraint only
  // encodes consensus on a connected graph).
  ConsensusConstraint(const AgentGraph& graph, int block_rows, int block_cols);

  const AgentGraph& graph() const { return graph_; }
  int block_rows() const { return rows_; }
  int block_cols() const { return cols_; }

  // A W: per-edge residual blocks W_i - W_j.
  std::vector<Mat> apply(const std::vector<Mat>& w) const;

  // A^T lambda: per-agent accumulation, +lambda_e at i, -lambda_e at j.
  std::vector<Mat> adjoint(const std::vector<Mat>& lambda) const;

  // Frobenius norm of A W without materializing intermediate storage.
  double residual_norm(const std::vector<Mat>& w) const;

  void check_agent_blocks(const std::vector<Mat>& w, const char* what) const;
  void check_edge_blocks(const std::vector<Mat>& lambda, const char* what) const;

 private:
  AgentGraph graph_;
  int rows_ = 0;
  int cols_ = 0;
};

}  // namespace mpcache

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mpcache/topology.hpp"

namespace mpcache {

// Spatial binning of raw coordinates onto the s x s service grid. Cell (r, c)
// maps to state r*s + c; row 0 is the lat_min edge, column 0 the lon_min edge.
struct GridSpec {
  double lat_min = 0.0, lat_max = 1.0;
  double lon_min = 0.0, lon_max = 1.0;
  int side = 3;

  // State index, or -1 when the point lies outside the bounding box.
  int cell_index(double lat, double lon) const;
  void validate() const;
};

// One trajectory sample after timestamp parsing (minutes since epoch).
struct RawPoint {
  std::string mt_id;
  double t_minutes = 0.0;
  double lat = 0.0;
  double lon = 0.0;
};

// CSV schema: mt_id,timestamp_iso8601,lat,lon. Accepts 'T' or ' ' as the
// date/time separator and an optional fractional-seconds suffix.
std::vector<RawPoint> load_trajectory_csv(const std::string& path);
double parse_iso8601_minutes(const std::string& stamp);

// (state, whole minutes spent there); a trace is the ordered run-length
// encoding of a terminal's state path.
struct SojournEntry {
  int state = 0;
  int minutes = 0;
};
using StateSequence = std::vector<SojournEntry>;

struct DiscretizedTraces {
  std::vector<std::string> mt_ids;  // sorted
  std::vector<StateSequence> sequences;
};

// Bins points to cells, drops out-of-box points, merges consecutive samples
// in the same cell, rounds sojourns to whole minutes (minimum 1) and clamps
// them to t_max. Timestamps must be non-decreasing per terminal.
DiscretizedTraces discretize_trajectories(const std::vector<RawPoint>& points,
                                          const GridSpec& grid, int t_max);

void save_sequences_csv(const std::string& path, const DiscretizedTraces& traces);

// Per-terminal Markov renewal mobility model on the agent graph: transition
// rows P[m][i] (length N, support inside the neighborhood of i, rows sum to
// 1) and sojourn pmfs Psi[m][i] over durations 1..t_max.
class MarkovRenewalModel {
 public:
  MarkovRenewalModel(std::vector<std::vector<std::vector<double>>> rows,
                     std::vector<std::vector<std::vector<double>>> sojourn,
                     const AgentGraph& graph);

  // Empirical frequencies from observed sequences. Jumps between
  // non-adjacent states are split along a shortest path with one-minute
  // intermediate sojourns; the final (censored) sojourn of each sequence is
  // not counted. Unvisited states fall back to uniform over the neighborhood
  // and uniform over 1..t_max.
  static MarkovRenewalModel estimate(const std::vector<StateSequence>& sequences,
                                     const AgentGraph& graph, int t_max);

  int mt_count() const { return static_cast<int>(rows_.size()); }
  int state_count() const { return state_count_; }
  int t_max() const { return t_max_; }

  const std::vector<double>& transition_row(int mt, int state) const;
  // pmf over durations 1..t_max; index d-1 holds P(sojourn = d).
  const std::vector<double>& sojourn_pmf(int mt, int state) const;
  double sojourn_mean(int mt, int state) const;

  void validate(const AgentGraph& graph) const;

 private:
  MarkovRenewalModel() = default;
  int state_count_ = 0;
  int t_max_ = 0;
  std::vector<std::vector<std::vector<double>>> rows_;
  std::vector<std::vector<std::vector<double>>> sojourn_;
};

// Remaining-time forecast for one terminal sitting at `state` since
// `elapsed` minutes, looking t_d minutes ahead.
struct PathForecast {
  std::vector<int> path;
  double prob = 0.0;
};

struct MobilityForecast {
  int mt = -1;
  int state = -1;
  int elapsed = 0;
  double transition_time = 0.0;            // T1
  std::vector<PathForecast> paths;         // ordered by next hop
  std::map<int, double> residence;         // agent -> expected minutes within t_d
};

// T1 = sum_{x >= elapsed} x Psi(x) (as-is tail moment; `normalized` divides
// by the tail mass instead, giving the true conditional expectation).
double predict_transition_time(const std::vector<double>& sojourn_pmf, int elapsed,
                               bool normalized = false);

// Single path [state] with probability 1 when T1 >= t_d; otherwise one
// two-hop path [state, j] per neighbor j with probability P(state -> j).
std::vector<PathForecast> enumerate_paths(const std::vector<double>& transition_row,
                                          const AgentGraph& graph, int state, double t1,
                                          double t_d);

// Expected residence r_{i->j} = max(t_d - T1, 0) P(i -> j) for neighbors,
// plus min(T1, t_d) at the current agent.
std::map<int, double> residence_times(const std::vector<double>& transition_row,
                                      const AgentGraph& graph, int state, double t1,
                                      double t_d);

MobilityForecast forecast_mt(const MarkovRenewalModel& model, const AgentGraph& graph, int mt,
                             int state, int elapsed, double t_d, bool normalized_tt = false);

std::string forecasts_to_json(const std::vector<MobilityForecast>& forecasts);

// Samples sojourn/jump alternations per terminal until the horizon (minutes)
// is filled; the last sojourn is truncated at the horizon. Terminal m uses
// the substream mix_seed(seed, m).
std::vector<StateSequence> generate_traces(const MarkovRenewalModel& model,
                                           const AgentGraph& graph,
                                           const std::vector<int>& initial_states,
                                           int horizon_minutes, std::uint64_t seed);

}  // namespace mpcache

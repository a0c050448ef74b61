#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mpcache/mobility.hpp"
#include "mpcache/topology.hpp"

namespace mpcache {

// File-popularity profile of one interest group: Zipf masses assigned to a
// seeded random permutation of the catalog.
//   prob[f] = rank(f)^-iota / sum_r r^-iota
struct ZipfProfile {
  Eigen::VectorXd prob;            // length F, sums to 1
  std::vector<int> ranked_files;   // ranked_files[r] = 0-based file with rank r+1
  double iota = 0.0;
};

ZipfProfile zipf_preference(int file_count, double iota, std::uint64_t perm_seed);

struct Request {
  double time = 0.0;  // minutes, relative to the episode origin
  int mt = -1;
  int agent = -1;  // serving agent at request time
  int file = -1;   // 0-based
};

struct RequestLog {
  std::vector<Request> requests;
  double window_start = 0.0;
  double window_end = 0.0;
};

// Piecewise-constant location lookup built from a sojourn trace that starts
// at `start` minutes. Past the end of the trace the terminal stays put.
class LocationTimeline {
 public:
  LocationTimeline(const StateSequence& seq, double start);
  int at(double t) const;

 private:
  std::vector<double> boundaries_;  // segment start times
  std::vector<int> states_;
};

// Requests over [window_start, window_end): terminal m of group g draws file
// i.i.d. from profile[g], timed deterministically at rate_per_minute spacing
// (phase 0) or, when poisson is set, as a Poisson process of that rate.
RequestLog simulate_requests(const std::vector<LocationTimeline>& timelines,
                             const std::vector<int>& group_of_mt,
                             const std::vector<ZipfProfile>& profiles, double rate_per_minute,
                             double window_start, double window_end, std::uint64_t seed,
                             bool poisson = false);

// Empirical file frequencies of the requests served by one agent. Flagged
// (second member false) when the agent served no requests; the vector is
// then uniform.
std::pair<Eigen::VectorXd, bool> observed_preference(const RequestLog& log, int agent,
                                                     int file_count);

// Model-based preference read-out. Given the learned blocks and the feature
// vectors of the terminals currently at the agent:
//   scores = sum_m (wc + wh)^T x_m, clamped at 0, L1-normalized.
// p_tilde uses wc alone in the numerator but the same normalizer. Falls back
// to uniform + flag when there are no terminals or no positive mass.
struct PreferenceEstimate {
  Eigen::VectorXd p_hat;
  Eigen::VectorXd p_tilde;
  bool valid = true;
};

PreferenceEstimate predicted_preference(const Mat& wc, const Mat& wh,
                                        const std::vector<Eigen::VectorXd>& inputs);

// Mean L1 distance (1/N') sum_i ||p_hat_i - p_i||_1 over agents whose flags
// are all valid; N' is the number of such agents.
double prediction_error(const std::vector<Eigen::VectorXd>& p_hat,
                        const std::vector<Eigen::VectorXd>& p_obs,
                        const std::vector<bool>& valid);

// Top-theta files by preference score; ties broken toward the lower file
// index. theta must be in [0, F].
std::vector<int> place_cache_mpc(const Eigen::VectorXd& preference, int theta);
// theta distinct files uniformly at random.
std::vector<int> place_cache_rc(int file_count, int theta, std::uint64_t seed);

// Fraction of requests whose file was cached at the serving agent. Agents
// without requests are excluded from the average; (hit, valid) per agent.
struct HitStats {
  std::vector<double> per_agent;
  std::vector<bool> has_requests;
  double average = 0.0;  // over agents with requests
};

HitStats hit_ratio(const std::vector<std::vector<int>>& placements, const RequestLog& log,
                   int agent_count);

}  // namespace mpcache

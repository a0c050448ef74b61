#include "mpcache/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpcache/rng.hpp"

namespace mpcache {

ZipfProfile zipf_preference(int file_count, double iota, std::uint64_t perm_seed) {
  if (file_count <= 0) throw ParameterError("file_count must be positive");
  if (iota < 0.0) throw ParameterError("zipf exponent must be nonnegative");
  ZipfProfile zp;
  zp.iota = iota;
  zp.ranked_files.resize(file_count);
  std::iota(zp.ranked_files.begin(), zp.ranked_files.end(), 0);
  Rng rng(perm_seed, /*tag=*/0x7a697066ULL);
  rng.shuffle(zp.ranked_files);

  double h = 0.0;
  for (int r = 1; r <= file_count; ++r) h += std::pow(r, -iota);
  zp.prob = Eigen::VectorXd::Zero(file_count);
  for (int r = 0; r < file_count; ++r)
    zp.prob[zp.ranked_files[r]] = std::pow(r + 1.0, -iota) / h;
  return zp;
}

LocationTimeline::LocationTimeline(const StateSequence& seq, double start) {
  if (seq.empty()) throw DataError("location timeline: empty state sequence");
  double t = start;
  for (const auto& e : seq) {
    boundaries_.push_back(t);
    states_.push_back(e.state);
    t += e.minutes;
  }
}

int LocationTimeline::at(double t) const {
  auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
  if (it == boundaries_.begin()) return states_.front();
  return states_[(it - boundaries_.begin()) - 1];
}

RequestLog simulate_requests(const std::vector<LocationTimeline>& timelines,
                             const std::vector<int>& group_of_mt,
                             const std::vector<ZipfProfile>& profiles, double rate_per_minute,
                             double window_start, double window_end, std::uint64_t seed,
                             bool poisson) {
  if (!(window_end > window_start)) throw ParameterError("empty request window");
  if (rate_per_minute <= 0.0) throw ParameterError("request rate must be positive");
  if (timelines.size() != group_of_mt.size())
    throw DimensionError("simulate_requests: one timeline per terminal required");

  RequestLog log;
  log.window_start = window_start;
  log.window_end = window_end;
  for (std::size_t m = 0; m < timelines.size(); ++m) {
    int g = group_of_mt[m];
    if (g < 0 || g >= static_cast<int>(profiles.size()))
      throw ParameterError("simulate_requests: group index out of range");
    const Eigen::VectorXd& prob = profiles[g].prob;
    std::vector<double> pmf(prob.data(), prob.data() + prob.size());
    Rng rng(seed, 0x72657175ULL + static_cast<std::uint64_t>(m));

    double t = window_start;
    while (t < window_end) {
      Request r;
      r.time = t;
      r.mt = static_cast<int>(m);
      r.agent = timelines[m].at(t);
      r.file = rng.sample_pmf(pmf);
      log.requests.push_back(r);
      if (poisson)
        t += -std::log(1.0 - rng.uniform()) / rate_per_minute;
      else
        t += 1.0 / rate_per_minute;
    }
  }
  std::sort(log.requests.begin(), log.requests.end(), [](const Request& a, const Request& b) {
    return a.time != b.time ? a.time < b.time : a.mt < b.mt;
  });
  return log;
}

std::pair<Eigen::VectorXd, bool> observed_preference(const RequestLog& log, int agent,
                                                     int file_count) {
  if (file_count <= 0) throw ParameterError("file_count must be positive");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(file_count);
  double total = 0.0;
  for (const auto& r : log.requests) {
    if (r.agent != agent) continue;
    if (r.file < 0 || r.file >= file_count)
      throw DataError("observed_preference: file index out of range");
    counts[r.file] += 1.0;
    total += 1.0;
  }
  if (total == 0.0)
    return {Eigen::VectorXd::Constant(file_count, 1.0 / file_count), false};
  return {counts / total, true};
}

PreferenceEstimate predicted_preference(const Mat& wc, const Mat& wh,
                                        const std::vector<Eigen::VectorXd>& inputs) {
  int file_count = static_cast<int>(wc.cols());
  if (wh.rows() != wc.rows() || wh.cols() != wc.cols())
    throw DimensionError("predicted_preference: block shape mismatch");
  PreferenceEstimate est;
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(file_count, 1.0 / file_count);
  if (inputs.empty()) {
    est.p_hat = uniform;
    est.p_tilde = uniform;
    est.valid = false;
    return est;
  }
  Eigen::VectorXd score_full = Eigen::VectorXd::Zero(file_count);
  Eigen::VectorXd score_shared = Eigen::VectorXd::Zero(file_count);
  for (const auto& x : inputs) {
    if (x.size() != wc.rows())
      throw DimensionError("predicted_preference: input feature length mismatch");
    score_full += (wc + wh).transpose() * x;
    score_shared += wc.transpose() * x;
  }
  score_full = score_full.cwiseMax(0.0);
  score_shared = score_shared.cwiseMax(0.0);
  double denom = score_full.sum();
  if (denom <= 0.0) {
    est.p_hat = uniform;
    est.p_tilde = uniform;
    est.valid = false;
    return est;
  }
  est.p_hat = score_full / denom;
  est.p_tilde = score_shared / denom;
  return est;
}

double prediction_error(const std::vector<Eigen::VectorXd>& p_hat,
                        const std::vector<Eigen::VectorXd>& p_obs,
                        const std::vector<bool>& valid) {
  if (p_hat.size() != p_obs.size() || p_hat.size() != valid.size())
    throw DimensionError("prediction_error: per-agent inputs required");
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    if (!valid[i]) continue;
    if (p_hat[i].size() != p_obs[i].size())
      throw DimensionError("prediction_error: vector length mismatch");
    sum += (p_hat[i] - p_obs[i]).lpNorm<1>();
    ++count;
  }
  if (count == 0) throw DataError("prediction_error: every agent is flagged");
  return sum / count;
}

std::vector<int> place_cache_mpc(const Eigen::VectorXd& preference, int theta) {
  int file_count = static_cast<int>(preference.size());
  if (theta < 0 || theta > file_count)
    throw ParameterError("cache size must lie in [0, file_count]");
  std::vector<int> order(file_count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (preference[a] != preference[b]) return preference[a] > preference[b];
    return a < b;
  });
  order.resize(theta);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<int> place_cache_rc(int file_count, int theta, std::uint64_t seed) {
  if (file_count <= 0) throw ParameterError("file_count must be positive");
  if (theta < 0 || theta > file_count)
    throw ParameterError("cache size must lie in [0, file_count]");
  std::vector<int> files(file_count);
  std::iota(files.begin(), files.end(), 0);
  Rng rng(seed, /*tag=*/0x72616e64ULL);
  rng.shuffle(files);
  files.resize(theta);
  std::sort(files.begin(), files.end());
  return files;
}

HitStats hit_ratio(const std::vector<std::vector<int>>& placements, const RequestLog& log,
                   int agent_count) {
  if (static_cast<int>(placements.size()) != agent_count)
    throw DimensionError("hit_ratio: one placement per agent required");
  std::vector<std::vector<char>> cached(agent_count);
  for (int i = 0; i < agent_count; ++i) {
    for (int f : placements[i]) {
      if (f < 0) throw ParameterError("hit_ratio: negative file index");
      if (f >= static_cast<int>(cached[i].size())) cached[i].resize(f + 1, 0);
      cached[i][f] = 1;
    }
  }
  std::vector<double> hits(agent_count, 0.0), total(agent_count, 0.0);
  for (const auto& r : log.requests) {
    if (r.agent < 0 || r.agent >= agent_count)
      throw DataError("hit_ratio: request served by unknown agent");
    total[r.agent] += 1.0;
    if (r.file < static_cast<int>(cached[r.agent].size()) && cached[r.agent][r.file])
      hits[r.agent] += 1.0;
  }
  HitStats st;
  st.per_agent.resize(agent_count, 0.0);
  st.has_requests.resize(agent_count, false);
  double sum = 0.0;
  int active = 0;
  for (int i = 0; i < agent_count; ++i) {
    if (total[i] > 0.0) {
      st.per_agent[i] = hits[i] / total[i];
      st.has_requests[i] = true;
      sum += st.per_agent[i];
      ++active;
    }
  }
  st.average = active > 0 ? sum / active : 0.0;
  return st;
}

}  // namespace mpcache

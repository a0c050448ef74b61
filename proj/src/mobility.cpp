#include "mpcache/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mpcache/rng.hpp"

namespace mpcache {

void GridSpec::validate() const {
  if (side <= 0) throw ParameterError("grid side must be positive");
  if (!(lat_max > lat_min) || !(lon_max > lon_min))
    throw ParameterError("grid bounding box is degenerate");
}

int GridSpec::cell_index(double lat, double lon) const {
  validate();
  if (lat < lat_min || lat > lat_max || lon < lon_min || lon > lon_max) return -1;
  int r = static_cast<int>((lat - lat_min) / (lat_max - lat_min) * side);
  int c = static_cast<int>((lon - lon_min) / (lon_max - lon_min) * side);
  r = std::min(r, side - 1);
  c = std::min(c, side - 1);
  return r * side + c;
}

namespace {

// Howard Hinnant's days-from-civil; avoids timezone-dependent mktime.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = static_cast<unsigned>(y - era * 400);
  unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

double parse_iso8601_minutes(const std::string& stamp) {
  int y, mo, d, h, mi;
  double s;
  char sep;
  if (std::sscanf(stamp.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &s) != 7 ||
      (sep != 'T' && sep != ' '))
    throw DataError("bad timestamp: " + stamp);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
      s < 0.0 || s >= 61.0)
    throw DataError("timestamp field out of range: " + stamp);
  double days = static_cast<double>(days_from_civil(y, mo, d));
  return days * 1440.0 + h * 60.0 + mi + s / 60.0;
}

std::vector<RawPoint> load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("trajectory csv is empty: " + path);
  if (line.rfind("mt_id,", 0) != 0)
    throw DataError("trajectory csv must start with header mt_id,timestamp_iso8601,lat,lon");
  std::vector<RawPoint> pts;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, stamp, lat, lon;
    if (!std::getline(ls, id, ',') || !std::getline(ls, stamp, ',') ||
        !std::getline(ls, lat, ',') || !std::getline(ls, lon))
      throw DataError("trajectory csv line " + std::to_string(lineno) + ": expected 4 cells");
    RawPoint p;
    p.mt_id = id;
    p.t_minutes = parse_iso8601_minutes(stamp);
    try {
      p.lat = std::stod(lat);
      p.lon = std::stod(lon);
    } catch (const std::exception&) {
      throw DataError("trajectory csv line " + std::to_string(lineno) + ": bad coordinate");
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

DiscretizedTraces discretize_trajectories(const std::vector<RawPoint>& points,
                                          const GridSpec& grid, int t_max) {
  grid.validate();
  if (t_max <= 0) throw ParameterError("t_max must be positive");

  std::map<std::string, std::vector<const RawPoint*>> by_mt;
  for (const auto& p : points) by_mt[p.mt_id].push_back(&p);

  DiscretizedTraces out;
  for (auto& [id, pts] : by_mt) {
    for (std::size_t k = 1; k < pts.size(); ++k)
      if (pts[k]->t_minutes < pts[k - 1]->t_minutes)
        throw DataError("timestamps of terminal " + id + " are not non-decreasing");

    // Visits: (state, entry time), out-of-box points dropped, consecutive
    // same-cell samples merged.
    std::vector<std::pair<int, double>> visits;
    for (const RawPoint* p : pts) {
      int cell = grid.cell_index(p->lat, p->lon);
      if (cell < 0) continue;
      if (visits.empty() || visits.back().first != cell) visits.emplace_back(cell, p->t_minutes);
    }
    if (visits.empty()) continue;

    StateSequence seq;
    for (std::size_t k = 0; k < visits.size(); ++k) {
      double dur = (k + 1 < visits.size() ? visits[k + 1].second : visits[k].second + 1.0) -
                   visits[k].second;
      int minutes = std::max(1, static_cast<int>(std::llround(dur)));
      minutes = std::min(minutes, t_max);
      seq.push_back({visits[k].first, minutes});
    }
    out.mt_ids.push_back(id);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

void save_sequences_csv(const std::string& path, const DiscretizedTraces& traces) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "mt,state,sojourn\n";
  for (std::size_t m = 0; m < traces.sequences.size(); ++m)
    for (const auto& e : traces.sequences[m])
      out << traces.mt_ids[m] << ',' << e.state << ',' << e.minutes << '\n';
}

MarkovRenewalModel::MarkovRenewalModel(std::vector<std::vector<std::vector<double>>> rows,
                                       std::vector<std::vector<std::vector<double>>> sojourn,
                                       const AgentGraph& graph)
    : state_count_(graph.agent_count()), rows_(std::move(rows)), sojourn_(std::move(sojourn)) {
  if (rows_.size() != sojourn_.size())
    throw DimensionError("mobility model: rows/sojourn terminal counts differ");
  if (rows_.empty()) throw DimensionError("mobility model: no terminals");
  t_max_ = sojourn_.at(0).at(0).size();
  validate(graph);
}

const std::vector<double>& MarkovRenewalModel::transition_row(int mt, int state) const {
  return rows_.at(mt).at(state);
}

const std::vector<double>& MarkovRenewalModel::sojourn_pmf(int mt, int state) const {
  return sojourn_.at(mt).at(state);
}

double MarkovRenewalModel::sojourn_mean(int mt, int state) const {
  const auto& psi = sojourn_pmf(mt, state);
  double mean = 0.0;
  for (std::size_t d = 0; d < psi.size(); ++d) mean += (d + 1.0) * psi[d];
  return mean;
}

void MarkovRenewalModel::validate(const AgentGraph& graph) const {
  if (state_count_ != graph.agent_count())
    throw DimensionError("mobility model: state count differs from agent count");
  if (t_max_ <= 0) throw ParameterError("mobility model: t_max must be positive");
  for (std::size_t m = 0; m < rows_.size(); ++m) {
    if (static_cast<int>(rows_[m].size()) != state_count_ ||
        static_cast<int>(sojourn_[m].size()) != state_count_)
      throw DimensionError("mobility model: per-state tables have wrong length");
    for (int i = 0; i < state_count_; ++i) {
      const auto& row = rows_[m][i];
      if (static_cast<int>(row.size()) != state_count_)
        throw DimensionError("mobility model: transition row length mismatch");
      double total = 0.0;
      for (int j = 0; j < state_count_; ++j) {
        if (row[j] < 0.0) throw DataError("mobility model: negative transition probability");
        if (row[j] > 0.0 && graph.edge_index(i, j) < 0)
          throw TopologyError("mobility model: transition " + std::to_string(i) + "->" +
                              std::to_string(j) + " leaves the neighborhood");
        total += row[j];
      }
      if (graph.degree(i) > 0 && std::abs(total - 1.0) > 1e-9)
        throw DataError("mobility model: transition row does not sum to 1");
      const auto& psi = sojourn_[m][i];
      if (static_cast<int>(psi.size()) != t_max_)
        throw DimensionError("mobility model: sojourn pmf length mismatch");
      double mass = 0.0;
      for (double v : psi) {
        if (v < 0.0) throw DataError("mobility model: negative sojourn mass");
        mass += v;
      }
      if (std::abs(mass - 1.0) > 1e-9)
        throw DataError("mobility model: sojourn pmf does not sum to 1");
    }
  }
}

MarkovRenewalModel MarkovRenewalModel::estimate(const std::vector<StateSequence>& sequences,
                                                const AgentGraph& graph, int t_max) {
  if (t_max <= 0) throw ParameterError("t_max must be positive");
  int n_states = graph.agent_count();
  int mt_count = static_cast<int>(sequences.size());
  if (mt_count == 0) throw DataError("estimate: no sequences");

  MarkovRenewalModel model;
  model.state_count_ = n_states;
  model.t_max_ = t_max;
  model.rows_.assign(mt_count, std::vector<std::vector<double>>(
                                   n_states, std::vector<double>(n_states, 0.0)));
  model.sojourn_.assign(
      mt_count, std::vector<std::vector<double>>(n_states, std::vector<double>(t_max, 0.0)));

  for (int m = 0; m < mt_count; ++m) {
    // Normalize the raw sequence: check validity, merge repeats, split jumps
    // between non-adjacent states along a shortest path (one minute per
    // intermediate hop).
    StateSequence seq;
    for (const auto& e : sequences[m]) {
      if (e.state < 0 || e.state >= n_states)
        throw DataError("estimate: state " + std::to_string(e.state) + " out of range");
      if (e.minutes <= 0) throw DataError("estimate: nonpositive sojourn");
      if (!seq.empty() && seq.back().state == e.state) {
        seq.back().minutes += e.minutes;
        continue;
      }
      if (!seq.empty() && graph.edge_index(seq.back().state, e.state) < 0) {
        auto path = graph.shortest_path(seq.back().state, e.state);
        if (path.empty())
          throw TopologyError("estimate: no path between observed states");
        for (std::size_t h = 1; h + 1 < path.size(); ++h) seq.push_back({path[h], 1});
      }
      seq.push_back(e);
    }

    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
      int i = seq[k].state, j = seq[k + 1].state;
      model.rows_[m][i][j] += 1.0;
      int d = std::clamp(seq[k].minutes, 1, t_max);
      model.sojourn_[m][i][d - 1] += 1.0;
    }

    for (int i = 0; i < n_states; ++i) {
      auto& row = model.rows_[m][i];
      double total = 0.0;
      for (double v : row) total += v;
      if (total > 0.0) {
        for (double& v : row) v /= total;
      } else if (graph.degree(i) > 0) {
        for (int j : graph.neighbors(i)) row[j] = 1.0 / graph.degree(i);
      }
      auto& psi = model.sojourn_[m][i];
      double mass = 0.0;
      for (double v : psi) mass += v;
      if (mass > 0.0) {
        for (double& v : psi) v /= mass;
      } else {
        for (double& v : psi) v = 1.0 / t_max;
      }
    }
  }
  model.validate(graph);
  return model;
}

double predict_transition_time(const std::vector<double>& sojourn_pmf, int elapsed,
                               bool normalized) {
  if (elapsed < 0) throw ParameterError("elapsed time must be nonnegative");
  double t1 = 0.0, tail = 0.0;
  for (std::size_t d = 0; d < sojourn_pmf.size(); ++d) {
    double x = d + 1.0;
    if (x < elapsed) continue;
    t1 += x * sojourn_pmf[d];
    tail += sojourn_pmf[d];
  }
  if (!normalized) return t1;
  return tail > 0.0 ? t1 / tail : 0.0;
}

std::vector<PathForecast> enumerate_paths(const std::vector<double>& transition_row,
                                          const AgentGraph& graph, int state, double t1,
                                          double t_d) {
  if (state < 0 || state >= graph.agent_count())
    throw ParameterError("enumerate_paths: state out of range");
  std::vector<PathForecast> paths;
  if (t1 >= t_d || graph.degree(state) == 0) {
    paths.push_back({{state}, 1.0});
    return paths;
  }
  for (int j : graph.neighbors(state)) paths.push_back({{state, j}, transition_row[j]});
  return paths;
}

std::map<int, double> residence_times(const std::vector<double>& transition_row,
                                      const AgentGraph& graph, int state, double t1,
                                      double t_d) {
  if (t_d <= 0.0) throw ParameterError("t_d must be positive");
  std::map<int, double> res;
  double at_state = std::min(t1, t_d);
  double remainder = std::max(t_d - t1, 0.0);
  res[state] = at_state;
  if (remainder > 0.0)
    for (int j : graph.neighbors(state)) {
      double r = remainder * transition_row[j];
      if (r > 0.0) res[j] += r;
    }
  return res;
}

MobilityForecast forecast_mt(const MarkovRenewalModel& model, const AgentGraph& graph, int mt,
                             int state, int elapsed, double t_d, bool normalized_tt) {
  if (mt < 0 || mt >= model.mt_count()) throw ParameterError("forecast_mt: bad terminal index");
  if (state < 0 || state >= graph.agent_count())
    throw ParameterError("forecast_mt: state out of range");
  MobilityForecast fc;
  fc.mt = mt;
  fc.state = state;
  fc.elapsed = elapsed;
  fc.transition_time = predict_transition_time(model.sojourn_pmf(mt, state), elapsed,
                                               normalized_tt);
  fc.paths = enumerate_paths(model.transition_row(mt, state), graph, state,
                             fc.transition_time, t_d);
  fc.residence = residence_times(model.transition_row(mt, state), graph, state,
                                 fc.transition_time, t_d);
  return fc;
}

std::string forecasts_to_json(const std::vector<MobilityForecast>& forecasts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& fc : forecasts) {
    nlohmann::json j;
    j["mt"] = fc.mt;
    j["state"] = fc.state;
    j["elapsed"] = fc.elapsed;
    j["T1"] = fc.transition_time;
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& p : fc.paths) paths.push_back({{"path", p.path}, {"prob", p.prob}});
    j["paths"] = std::move(paths);
    nlohmann::json res = nlohmann::json::object();
    for (const auto& [agent, minutes] : fc.residence) res[std::to_string(agent)] = minutes;
    j["residence"] = std::move(res);
    arr.push_back(std::move(j));
  }
  return arr.dump(1) + "\n";
}

std::vector<StateSequence> generate_traces(const MarkovRenewalModel& model,
                                           const AgentGraph& graph,
                                           const std::vector<int>& initial_states,
                                           int horizon_minutes, std::uint64_t seed) {
  if (horizon_minutes <= 0) throw ParameterError("horizon must be positive");
  if (static_cast<int>(initial_states.size()) != model.mt_count())
    throw DimensionError("generate_traces: one initial state per terminal required");
  model.validate(graph);

  std::vector<StateSequence> out(model.mt_count());
  for (int m = 0; m < model.mt_count(); ++m) {
    int state = initial_states[m];
    if (state < 0 || state >= graph.agent_count())
      throw ParameterError("generate_traces: initial state out of range");
    Rng rng(seed, 0x74726163ULL + static_cast<std::uint64_t>(m));
    int t = 0;
    StateSequence seq;
    while (t < horizon_minutes) {
      int dur = rng.sample_pmf(model.sojourn_pmf(m, state)) + 1;
      dur = std::min(dur, horizon_minutes - t);
      seq.push_back({state, dur});
      t += dur;
      if (t >= horizon_minutes) break;
      if (graph.degree(state) == 0) {
        seq.back().minutes += horizon_minutes - t;
        break;
      }
      state = rng.sample_pmf(model.transition_row(m, state));
    }
    out[m] = std::move(seq);
  }
  return out;
}

}  // namespace mpcache

#include "mpcache/oracle.hpp"

#include <Eigen/Cholesky>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace mpcache {

namespace {

// Effective per-agent quadratic data of the centralized problem:
// loss_i(v) = 1/2 <v, S_i v> - <v, R_i> + const with R_i = D_i + kappa_i a_i.
struct CentralBlocks {
  std::vector<Mat> s;       // S_i + kappa_i I
  std::vector<Mat> r;       // R_i
  Mat m0;                   // sum_i (S_i + kappa_i I) + N mu1 I
  int n = 0, nu = 0, agents = 0;
};

CentralBlocks central_blocks(const Problem& p) {
  CentralBlocks cb;
  cb.agents = p.graph.agent_count();
  cb.n = p.feature_dim;
  cb.nu = p.target_dim;
  cb.m0 = cb.agents * p.reg.mu1 * Mat::Identity(cb.n, cb.n);
  for (const auto& loss : p.losses) {
    Mat sk = loss.quad() + loss.kappa() * Mat::Identity(cb.n, cb.n);
    cb.s.push_back(sk);
    cb.r.push_back(loss.linear() + loss.kappa() * loss.anchor());
    cb.m0 += sk;
  }
  return cb;
}

double objective_at(const Problem& p, const Mat& w0, const std::vector<Mat>& wh) {
  std::vector<Mat> wc(p.graph.agent_count(), w0);
  return p.objective(wc, wh);
}

ReferenceSolution pack(const Problem& p, Mat w0, std::vector<Mat> wh, const char* method) {
  ReferenceSolution ref;
  ref.wc.assign(p.graph.agent_count(), w0);
  ref.objective = objective_at(p, w0, wh);
  ref.w0 = std::move(w0);
  ref.wh = std::move(wh);
  ref.method = method;
  return ref;
}

void hash_u64(std::uint64_t& h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xffULL;
    h *= 0x100000001b3ULL;
  }
}

void hash_double(std::uint64_t& h, double v) { hash_u64(h, std::bit_cast<std::uint64_t>(v)); }

void hash_mat(std::uint64_t& h, const Mat& m) {
  hash_u64(h, static_cast<std::uint64_t>(m.rows()));
  hash_u64(h, static_cast<std::uint64_t>(m.cols()));
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r) hash_double(h, m(r, c));
}

std::vector<double> mat_to_vec(const Mat& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

Mat vec_to_mat(const std::vector<double>& v, int rows, int cols) {
  if (static_cast<int>(v.size()) != rows * cols)
    throw OracleError("cached matrix has wrong length");
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

}  // namespace

ReferenceSolution solve_centralized_ao(const Problem& problem, double tol, int max_sweeps,
                                       std::vector<double>* sweep_objectives) {
  if (tol <= 0.0) throw ParameterError("ao tolerance must be positive");
  CentralBlocks cb = central_blocks(problem);
  Eigen::LLT<Mat> llt0(cb.m0);
  if (llt0.info() != Eigen::Success)
    throw OracleError("centralized w0 system is not positive definite");
  std::vector<Eigen::LLT<Mat>> llts;
  llts.reserve(cb.agents);
  for (int i = 0; i < cb.agents; ++i) {
    Mat mi = cb.s[i] + problem.reg.mu2 * Mat::Identity(cb.n, cb.n);
    llts.emplace_back(mi);
    if (llts.back().info() != Eigen::Success)
      throw OracleError("centralized wh system is not positive definite");
  }

  Mat w0 = Mat::Zero(cb.n, cb.nu);
  std::vector<Mat> wh(cb.agents, Mat::Zero(cb.n, cb.nu));
  double prev = objective_at(problem, w0, wh);
  if (sweep_objectives) sweep_objectives->clear();

  // The objective stalls at rounding level while the weights are still only
  // sqrt(eps)-accurate, so termination additionally demands that the sweep
  // stops moving the blocks.
  const double step_tol = 1e-13;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Mat rhs0 = Mat::Zero(cb.n, cb.nu);
    for (int i = 0; i < cb.agents; ++i) rhs0 += cb.r[i] - cb.s[i] * wh[i];
    Mat w0_new = llt0.solve(rhs0);
    double step = (w0_new - w0).cwiseAbs().maxCoeff() / (1.0 + w0.cwiseAbs().maxCoeff());
    w0 = std::move(w0_new);
    for (int i = 0; i < cb.agents; ++i) {
      Mat wh_new = llts[i].solve(cb.r[i] - cb.s[i] * w0);
      step = std::max(step, (wh_new - wh[i]).cwiseAbs().maxCoeff() /
                                (1.0 + wh[i].cwiseAbs().maxCoeff()));
      wh[i] = std::move(wh_new);
    }

    double cur = objective_at(problem, w0, wh);
    if (sweep_objectives) sweep_objectives->push_back(cur);
    if (std::abs(prev - cur) < tol * (1.0 + std::abs(cur)) && step < step_tol)
      return pack(problem, std::move(w0), std::move(wh), "ao");
    prev = cur;
  }
  throw OracleError("alternating optimization did not converge in " +
                    std::to_string(max_sweeps) + " sweeps");
}

ReferenceSolution solve_kkt_direct(const Problem& problem) {
  CentralBlocks cb = central_blocks(problem);
  std::int64_t dim = static_cast<std::int64_t>(cb.agents + 1) * cb.n;
  if (dim > 4096)
    throw OracleError("kkt system dimension " + std::to_string(dim) +
                      " exceeds the dense-solve cap 4096");

  Mat m = Mat::Zero(dim, dim);
  Mat rhs = Mat::Zero(dim, cb.nu);
  m.topLeftCorner(cb.n, cb.n) = cb.m0;
  for (int i = 0; i < cb.agents; ++i) {
    int off = (i + 1) * cb.n;
    m.block(0, off, cb.n, cb.n) = cb.s[i];
    m.block(off, 0, cb.n, cb.n) = cb.s[i];
    m.block(off, off, cb.n, cb.n) =
        cb.s[i] + problem.reg.mu2 * Mat::Identity(cb.n, cb.n);
    rhs.middleRows(off, cb.n) = cb.r[i];
    rhs.topRows(cb.n) += cb.r[i];
  }
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success)
    throw OracleError("kkt system is not positive definite");
  Mat sol = llt.solve(rhs);

  Mat w0 = sol.topRows(cb.n);
  std::vector<Mat> wh;
  wh.reserve(cb.agents);
  for (int i = 0; i < cb.agents; ++i) wh.push_back(sol.middleRows((i + 1) * cb.n, cb.n));
  return pack(problem, std::move(w0), std::move(wh), "kkt");
}

double kkt_residual(const Problem& problem, const ReferenceSolution& ref) {
  CentralBlocks cb = central_blocks(problem);
  Mat r0 = cb.agents * problem.reg.mu1 * ref.w0;
  Mat rhs0 = Mat::Zero(cb.n, cb.nu);
  double worst = 0.0;
  for (int i = 0; i < cb.agents; ++i) {
    Mat vi = ref.w0 + ref.wh[i];
    r0 += cb.s[i] * vi - cb.r[i];
    rhs0 += cb.r[i];
    Mat ri = cb.s[i] * vi - cb.r[i] + problem.reg.mu2 * ref.wh[i];
    worst = std::max(worst, ri.norm() / (1.0 + cb.r[i].norm()));
  }
  worst = std::max(worst, r0.norm() / (1.0 + rhs0.norm()));
  return worst;
}

std::pair<double, double> iterate_error(const Iterate& iter, const ReferenceSolution& ref) {
  if (iter.wc.size() != ref.wc.size() || iter.wh.size() != ref.wh.size())
    throw DimensionError("iterate_error: agent count mismatch");
  double ec = 0.0, eh = 0.0, count = 0.0;
  for (std::size_t i = 0; i < iter.wc.size(); ++i) {
    if (iter.wc[i].rows() != ref.wc[i].rows() || iter.wc[i].cols() != ref.wc[i].cols())
      throw DimensionError("iterate_error: block shape mismatch");
    ec += (iter.wc[i] - ref.wc[i]).squaredNorm();
    eh += (iter.wh[i] - ref.wh[i]).squaredNorm();
    count += static_cast<double>(iter.wc[i].size());
  }
  return {std::sqrt(ec / count), std::sqrt(eh / count)};
}

std::uint64_t problem_cache_key(const Problem& problem) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_u64(h, 2);  // serialization version
  hash_u64(h, static_cast<std::uint64_t>(problem.graph.agent_count()));
  hash_u64(h, static_cast<std::uint64_t>(problem.feature_dim));
  hash_u64(h, static_cast<std::uint64_t>(problem.target_dim));
  for (auto& [i, j] : problem.graph.edges()) {
    hash_u64(h, static_cast<std::uint64_t>(i));
    hash_u64(h, static_cast<std::uint64_t>(j));
  }
  hash_double(h, problem.reg.mu1);
  hash_double(h, problem.reg.mu2);
  for (const auto& loss : problem.losses) {
    hash_mat(h, loss.quad());
    hash_mat(h, loss.linear());
    hash_double(h, loss.kappa());
    hash_mat(h, loss.anchor());
    hash_double(h, loss.constant());
  }
  return h;
}

namespace {
std::string key_hex(std::uint64_t key) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(key));
  return buf;
}

std::string cache_path(const std::string& dir, std::uint64_t key) {
  return dir + "/ref_" + key_hex(key) + ".json";
}
}  // namespace

std::optional<ReferenceSolution> load_cached_reference(const std::string& dir,
                                                       std::uint64_t key) {
  std::ifstream in(cache_path(dir, key));
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("key").get<std::string>() != key_hex(key))
      throw OracleError("cache key mismatch");
    ReferenceSolution ref;
    ref.method = j.at("method").get<std::string>();
    ref.objective = j.at("objective").get<double>();
    int n = j.at("n").get<int>(), nu = j.at("nu").get<int>(), agents = j.at("agents").get<int>();
    ref.w0 = vec_to_mat(j.at("w0").get<std::vector<double>>(), n, nu);
    for (const auto& blk : j.at("wh"))
      ref.wh.push_back(vec_to_mat(blk.get<std::vector<double>>(), n, nu));
    if (static_cast<int>(ref.wh.size()) != agents)
      throw OracleError("cached wh block count mismatch");
    ref.wc.assign(agents, ref.w0);
    return ref;
  } catch (const nlohmann::json::exception& e) {
    throw OracleError(std::string("corrupt reference cache: ") + e.what());
  }
}

void store_cached_reference(const std::string& dir, std::uint64_t key,
                            const ReferenceSolution& ref) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["key"] = key_hex(key);
  j["method"] = ref.method;
  j["objective"] = ref.objective;
  j["n"] = static_cast<int>(ref.w0.rows());
  j["nu"] = static_cast<int>(ref.w0.cols());
  j["agents"] = static_cast<int>(ref.wh.size());
  j["w0"] = mat_to_vec(ref.w0);
  nlohmann::json wh = nlohmann::json::array();
  for (const auto& blk : ref.wh) wh.push_back(mat_to_vec(blk));
  j["wh"] = std::move(wh);
  std::ofstream out(cache_path(dir, key));
  if (!out) throw OracleError("cannot write reference cache in " + dir);
  out << j.dump(1) << '\n';
}

ReferenceSolution reference_solution(const Problem& problem, const std::string& cache_dir) {
  std::uint64_t key = problem_cache_key(problem);
  if (!cache_dir.empty())
    if (auto hit = load_cached_reference(cache_dir, key)) return *hit;
  std::int64_t dim =
      static_cast<std::int64_t>(problem.graph.agent_count() + 1) * problem.feature_dim;
  ReferenceSolution ref =
      dim <= 4096 ? solve_kkt_direct(problem) : solve_centralized_ao(problem);
  if (!cache_dir.empty()) store_cached_reference(cache_dir, key, ref);
  return ref;
}

}  // namespace mpcache

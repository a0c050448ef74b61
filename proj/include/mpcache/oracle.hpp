#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpcache/solver.hpp"

namespace mpcache {

// Centralized optimum of the consensus problem in its shared form: all wc
// blocks collapse to a single w0, so
//
//   min_{w0, wh} sum_i [ f_i(w0, wh_i) + mu2/2 ||wh_i||^2 ] + N mu1/2 ||w0||^2.
//
// wc holds N copies of w0 so iterates compare directly against it.
struct ReferenceSolution {
  Mat w0;
  std::vector<Mat> wc;
  std::vector<Mat> wh;
  double objective = 0.0;
  std::string method;  // "ao" or "kkt"
};

// Alternating optimization: exact w0 solve against fixed wh, then exact
// per-agent wh solves, until the objective decreases by less than
// tol * (1 + |objective|) over a sweep and the blocks themselves stall
// (the objective alone flattens at rounding level while the weights are
// still only sqrt(eps)-accurate). Factorizations are built once. Throws
// OracleError if max_sweeps is hit. sweep_objectives, when given, receives
// the objective after every sweep.
ReferenceSolution solve_centralized_ao(const Problem& problem, double tol = 1e-13,
                                       int max_sweeps = 20000,
                                       std::vector<double>* sweep_objectives = nullptr);

// One shot: assembles the symmetric positive definite KKT system over
// (w0, wh_1..wh_N) and solves by Cholesky. Guarded by a size cap
// (N+1) n <= 4096 to keep the dense solve honest.
ReferenceSolution solve_kkt_direct(const Problem& problem);

// Max relative residual of the centralized stationarity conditions at the
// candidate solution (plug-back check).
double kkt_residual(const Problem& problem, const ReferenceSolution& ref);

// Root-mean-square errors (E_wc, E_wh) of an iterate against the reference:
// sqrt(sum_i ||._i - ._i*||_F^2 / (N n nu)).
std::pair<double, double> iterate_error(const Iterate& iter, const ReferenceSolution& ref);

// Content hash of the problem's numeric data; the disk-cache key.
std::uint64_t problem_cache_key(const Problem& problem);

// Disk cache of reference solutions, one JSON file per key inside dir.
std::optional<ReferenceSolution> load_cached_reference(const std::string& dir,
                                                       std::uint64_t key);
void store_cached_reference(const std::string& dir, std::uint64_t key,
                            const ReferenceSolution& ref);

// KKT solve (AO fallback above the size cap) with read-through caching when
// cache_dir is non-empty.
ReferenceSolution reference_solution(const Problem& problem, const std::string& cache_dir = "");

}  // namespace mpcache

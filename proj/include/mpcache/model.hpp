#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mpcache/errors.hpp"
#include "mpcache/topology.hpp"

namespace mpcache {

// Per-agent training set. Columns of X are samples x_l (n x b), columns of Y
// the targets y_l (nu x b). mt_of_sample tracks which mobile terminal
// produced each column (-1 when unknown).
struct AgentDataset {
  Mat x;
  Mat y;
  std::vector<int> mt_of_sample;

  int feature_dim() const { return static_cast<int>(x.rows()); }
  int target_dim() const { return static_cast<int>(y.rows()); }
  int sample_count() const { return static_cast<int>(x.cols()); }
  void validate() const;
};

// Regularization constants of the learning problem. `modulus` is the strong
// convexity modulus m of the task-specific regularizer h = (mu2/2)||.||^2,
// hence always mu2 here; it is kept explicit because the safe-parameter
// thresholds depend on it.
struct RegularizationParams {
  double mu1 = 1.0;
  double mu2 = 1.0;
  double mu3 = 1.0;
  double mu12 = 1.0;
  double modulus = 1.0;

  static RegularizationParams make(double mu1, double mu2, double mu3, double mu12);
  void validate() const;
};

// Quadratic loss in v = w_check + w_hat:
//
//   f(v) = 1/2 <v, S v> - <v, D> + c0 + kappa/2 ||v - a||_F^2 + cpen
//
// where S = (1/b) X Phi X^T and D = (1/b) X Phi Y^T cover the (optionally
// sample-weighted) least-square part, and the (kappa, a) term is the
// model-transfer penalty added by the adaptive extension (kappa = 0, cpen = 0
// for the plain loss). Both gradient blocks of f(w_check, w_hat) coincide and
// equal S v - D + kappa (v - a).
class LossModel {
 public:
  // Unit sample weights.
  static LossModel least_square(const AgentDataset& ds);
  // Per-sample weights phi_l >= 0, one per column of ds.x.
  static LossModel least_square(const AgentDataset& ds, const std::vector<double>& weights);
  // Degenerate loss of an agent with no data: f = 0 over n x nu blocks.
  static LossModel empty(int feature_dim, int target_dim);

  // Returns a copy with the transfer penalty sum_j (mu3 c_j / 2)||wloc_j - v||^2
  // folded in: kappa += mu3 sum_j c_j, anchor = weighted mean of the wloc_j,
  // cpen keeps the value exact.
  LossModel with_transfer_penalty(double mu3,
                                  const std::vector<std::pair<double, Mat>>& incoming) const;

  int feature_dim() const { return static_cast<int>(quad_.rows()); }
  int target_dim() const { return static_cast<int>(lin_.cols()); }

  double value(const Mat& w_check, const Mat& w_hat) const;
  // Gradient w.r.t. (w_check, w_hat); the two blocks are equal by symmetry.
  std::pair<Mat, Mat> gradient(const Mat& w_check, const Mat& w_hat) const;

  // Lipschitz constant of the full gradient: 2 lambda_max(S) for the plain
  // loss; once a transfer penalty has been folded in, the composite constant
  // sqrt(2 C~^2 + 4 kappa^2) used by the safe-parameter thresholds.
  double lipschitz() const;
  // C~ of the least-square part alone.
  double base_lipschitz() const { return base_lipschitz_; }

  const Mat& quad() const { return quad_; }
  const Mat& linear() const { return lin_; }
  double kappa() const { return kappa_; }
  const Mat& anchor() const { return anchor_; }
  double constant() const { return c0_ + cpen_; }

 private:
  LossModel() = default;
  Mat quad_;    // S, n x n symmetric PSD
  Mat lin_;     // D, n x nu
  double c0_ = 0.0;
  double kappa_ = 0.0;
  Mat anchor_;  // a, n x nu (zero when kappa_ == 0)
  double cpen_ = 0.0;
  double base_lipschitz_ = 0.0;
  bool augmented_ = false;
};

// One-hot encoding of a request (group g of K, file f of F), 1-based indices:
// x = e_g in R^K, y = e_f in R^F.
std::pair<Eigen::VectorXd, Eigen::VectorXd> encode_request_sample(int group, int group_count,
                                                                  int file, int file_count);

// Dataset with i.i.d. U(0,1) entries, reproducible from the seed.
AgentDataset make_synthetic_dataset(int feature_dim, int target_dim, int sample_count,
                                    std::uint64_t seed);

// CSV exchange format: header agent,mt,x_1..x_n,y_1..y_nu, one row per
// sample. Agents with no rows come back empty with the common dims.
void save_datasets_csv(const std::string& path, const std::vector<AgentDataset>& datasets);
std::vector<AgentDataset> load_datasets_csv(const std::string& path, int agent_count);

}  // namespace mpcache

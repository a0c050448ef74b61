#include "mpcache/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpcache/rng.hpp"

namespace mpcache {

void AgentDataset::validate() const {
  if (y.cols() != x.cols())
    throw DimensionError("dataset: X has " + std::to_string(x.cols()) + " samples, Y has " +
                         std::to_string(y.cols()));
  if (!mt_of_sample.empty() &&
      static_cast<int>(mt_of_sample.size()) != static_cast<int>(x.cols()))
    throw DimensionError("dataset: mt_of_sample length mismatch");
  if (!x.allFinite() || !y.allFinite()) throw DataError("dataset: non-finite entry");
}

RegularizationParams RegularizationParams::make(double mu1, double mu2, double mu3,
                                                double mu12) {
  RegularizationParams r;
  r.mu1 = mu1;
  r.mu2 = mu2;
  r.mu3 = mu3;
  r.mu12 = mu12;
  r.modulus = mu2;
  r.validate();
  return r;
}

void RegularizationParams::validate() const {
  if (mu1 < 0 || mu2 < 0 || mu3 < 0 || mu12 < 0)
    throw ParameterError("regularization constants must be nonnegative");
  if (modulus <= 0) throw ParameterError("strong convexity modulus must be positive");
}

LossModel LossModel::least_square(const AgentDataset& ds) {
  return least_square(ds, std::vector<double>(ds.sample_count(), 1.0));
}

LossModel LossModel::least_square(const AgentDataset& ds, const std::vector<double>& weights) {
  ds.validate();
  if (ds.feature_dim() <= 0 || ds.target_dim() <= 0)
    throw DimensionError("least_square: dataset needs positive feature/target dims");
  if (static_cast<int>(weights.size()) != ds.sample_count())
    throw DimensionError("loss weights: " + std::to_string(weights.size()) + " for " +
                         std::to_string(ds.sample_count()) + " samples");
  for (double w : weights)
    if (!(w >= 0.0)) throw ParameterError("sample weights must be nonnegative");

  int n = ds.feature_dim();
  int nu = ds.target_dim();
  int b = ds.sample_count();
  LossModel m;
  m.quad_ = Mat::Zero(n, n);
  m.lin_ = Mat::Zero(n, nu);
  m.anchor_ = Mat::Zero(n, nu);
  if (b > 0) {
    Eigen::VectorXd phi = Eigen::Map<const Eigen::VectorXd>(weights.data(), b);
    Mat xw = ds.x * phi.asDiagonal();  // n x b, columns scaled
    m.quad_ = (xw * ds.x.transpose()) / b;
    m.quad_ = 0.5 * (m.quad_ + m.quad_.transpose()).eval();
    m.lin_ = (xw * ds.y.transpose()) / b;
    m.c0_ = 0.5 * (phi.array() * ds.y.colwise().squaredNorm().transpose().array()).sum() / b;
    Eigen::SelfAdjointEigenSolver<Mat> es(m.quad_, Eigen::EigenvaluesOnly);
    m.base_lipschitz_ = 2.0 * std::max(0.0, es.eigenvalues().maxCoeff());
  }
  return m;
}

LossModel LossModel::empty(int feature_dim, int target_dim) {
  if (feature_dim <= 0 || target_dim <= 0)
    throw DimensionError("empty loss needs positive dimensions");
  LossModel m;
  m.quad_ = Mat::Zero(feature_dim, feature_dim);
  m.lin_ = Mat::Zero(feature_dim, target_dim);
  m.anchor_ = Mat::Zero(feature_dim, target_dim);
  return m;
}

LossModel LossModel::with_transfer_penalty(
    double mu3, const std::vector<std::pair<double, Mat>>& incoming) const {
  if (mu3 < 0) throw ParameterError("mu3 must be nonnegative");
  LossModel m = *this;
  m.augmented_ = true;
  double csum = 0.0;
  Mat wsum = Mat::Zero(feature_dim(), target_dim());
  double sq = 0.0;
  for (const auto& [c, w] : incoming) {
    if (c < 0) throw ParameterError("combiner must be nonnegative");
    if (c == 0.0) continue;
    if (w.rows() != feature_dim() || w.cols() != target_dim())
      throw DimensionError("transfer weight block has wrong shape");
    csum += c;
    wsum += c * w;
    sq += c * w.squaredNorm();
  }
  double kappa = mu3 * csum;
  if (kappa == 0.0) return m;
  Mat a = wsum / csum;
  // sum_j (mu3 c_j/2)||w_j - v||^2 = kappa/2 ||v - a||^2 + const
  m.kappa_ += kappa;
  m.anchor_ = (anchor_ * kappa_ + kappa * a) / m.kappa_;
  m.cpen_ += 0.5 * mu3 * sq - 0.5 * kappa * a.squaredNorm() +
             0.5 * (kappa_ * anchor_.squaredNorm() + kappa * a.squaredNorm() -
                    m.kappa_ * m.anchor_.squaredNorm());
  return m;
}

double LossModel::value(const Mat& w_check, const Mat& w_hat) const {
  if (w_check.rows() != feature_dim() || w_check.cols() != target_dim() ||
      w_hat.rows() != feature_dim() || w_hat.cols() != target_dim())
    throw DimensionError("loss value: weight block shape mismatch");
  Mat v = w_check + w_hat;
  double val = 0.5 * (v.array() * (quad_ * v).array()).sum() -
               (v.array() * lin_.array()).sum() + c0_ + cpen_;
  if (kappa_ > 0.0) val += 0.5 * kappa_ * (v - anchor_).squaredNorm();
  return val;
}

std::pair<Mat, Mat> LossModel::gradient(const Mat& w_check, const Mat& w_hat) const {
  if (w_check.rows() != feature_dim() || w_check.cols() != target_dim() ||
      w_hat.rows() != feature_dim() || w_hat.cols() != target_dim())
    throw DimensionError("loss gradient: weight block shape mismatch");
  Mat v = w_check + w_hat;
  Mat g = quad_ * v - lin_;
  if (kappa_ > 0.0) g += kappa_ * (v - anchor_);
  return {g, g};
}

double LossModel::lipschitz() const {
  if (!augmented_ && kappa_ == 0.0) return base_lipschitz_;
  return std::sqrt(2.0 * base_lipschitz_ * base_lipschitz_ + 4.0 * kappa_ * kappa_);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> encode_request_sample(int group, int group_count,
                                                                  int file, int file_count) {
  if (group_count <= 0 || file_count <= 0)
    throw ParameterError("encode_request_sample: counts must be positive");
  if (group < 1 || group > group_count)
    throw ParameterError("encode_request_sample: group " + std::to_string(group) +
                         " outside 1.." + std::to_string(group_count));
  if (file < 1 || file > file_count)
    throw ParameterError("encode_request_sample: file " + std::to_string(file) +
                         " outside 1.." + std::to_string(file_count));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(group_count);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(file_count);
  x[group - 1] = 1.0;
  y[file - 1] = 1.0;
  return {x, y};
}

AgentDataset make_synthetic_dataset(int feature_dim, int target_dim, int sample_count,
                                    std::uint64_t seed) {
  if (feature_dim <= 0 || target_dim <= 0 || sample_count < 0)
    throw ParameterError("make_synthetic_dataset: invalid dimensions");
  Rng rng(seed, /*tag=*/0x64617461ULL);
  AgentDataset ds;
  ds.x = Mat(feature_dim, sample_count);
  ds.y = Mat(target_dim, sample_count);
  for (int c = 0; c < sample_count; ++c)
    for (int r = 0; r < feature_dim; ++r) ds.x(r, c) = rng.uniform();
  for (int c = 0; c < sample_count; ++c)
    for (int r = 0; r < target_dim; ++r) ds.y(r, c) = rng.uniform();
  ds.mt_of_sample.assign(sample_count, -1);
  return ds;
}

namespace {
std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void save_datasets_csv(const std::string& path, const std::vector<AgentDataset>& datasets) {
  if (datasets.empty()) throw DataError("save_datasets_csv: no datasets");
  int n = datasets[0].feature_dim();
  int nu = datasets[0].target_dim();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "agent,mt";
  for (int r = 1; r <= n; ++r) out << ",x_" << r;
  for (int r = 1; r <= nu; ++r) out << ",y_" << r;
  out << '\n';
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& ds = datasets[i];
    if (ds.feature_dim() != n || ds.target_dim() != nu)
      throw DimensionError("save_datasets_csv: mixed dimensions across agents");
    for (int l = 0; l < ds.sample_count(); ++l) {
      out << i << ',' << (ds.mt_of_sample.empty() ? -1 : ds.mt_of_sample[l]);
      for (int r = 0; r < n; ++r) out << ',' << csv_num(ds.x(r, l));
      for (int r = 0; r < nu; ++r) out << ',' << csv_num(ds.y(r, l));
      out << '\n';
    }
  }
}

std::vector<AgentDataset> load_datasets_csv(const std::string& path, int agent_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("dataset csv is empty: " + path);

  int n = 0, nu = 0;
  {
    std::istringstream hs(header);
    std::string col;
    int idx = 0;
    while (std::getline(hs, col, ',')) {
      if (idx == 0 && col != "agent") throw DataError("dataset csv: first column must be agent");
      if (idx == 1 && col != "mt") throw DataError("dataset csv: second column must be mt");
      if (col.rfind("x_", 0) == 0) ++n;
      if (col.rfind("y_", 0) == 0) ++nu;
      ++idx;
    }
    if (n == 0 || nu == 0) throw DataError("dataset csv: missing x_/y_ columns");
  }

  std::vector<std::vector<std::vector<double>>> xs(agent_count), ys(agent_count);
  std::vector<std::vector<int>> mts(agent_count);
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != 2 + n + nu)
      throw DataError("dataset csv line " + std::to_string(lineno) + ": expected " +
                      std::to_string(2 + n + nu) + " cells, got " +
                      std::to_string(cells.size()));
    int agent;
    try {
      agent = std::stoi(cells[0]);
    } catch (const std::exception&) {
      throw DataError("dataset csv line " + std::to_string(lineno) + ": bad agent id");
    }
    if (agent < 0 || agent >= agent_count)
      throw DataError("dataset csv line " + std::to_string(lineno) + ": agent " +
                      std::to_string(agent) + " outside 0.." +
                      std::to_string(agent_count - 1));
    std::vector<double> row;
    row.reserve(n + nu);
    for (int c = 2; c < 2 + n + nu; ++c) {
      try {
        row.push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw DataError("dataset csv line " + std::to_string(lineno) + ": bad number '" +
                        cells[c] + "'");
      }
    }
    xs[agent].emplace_back(row.begin(), row.begin() + n);
    ys[agent].emplace_back(row.begin() + n, row.end());
    mts[agent].push_back(std::stoi(cells[1]));
  }

  std::vector<AgentDataset> out(agent_count);
  for (int i = 0; i < agent_count; ++i) {
    int b = static_cast<int>(xs[i].size());
    out[i].x = Mat(n, b);
    out[i].y = Mat(nu, b);
    for (int l = 0; l < b; ++l) {
      for (int r = 0; r < n; ++r) out[i].x(r, l) = xs[i][l][r];
      for (int r = 0; r < nu; ++r) out[i].y(r, l) = ys[i][l][r];
    }
    out[i].mt_of_sample = std::move(mts[i]);
    out[i].validate();
  }
  return out;
}

}  // namespace mpcache

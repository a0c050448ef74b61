#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>

#include "mpcache/model.hpp"
#include "mpcache/rng.hpp"

namespace testutil {

using mpcache::Mat;

inline Mat random_mat(int rows, int cols, mpcache::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  return m;
}

// Central finite differences of loss.value in both weight blocks. Exact for
// quadratics up to round-off.
inline std::pair<Mat, Mat> fd_gradient(const mpcache::LossModel& loss, const Mat& wc,
                                       const Mat& wh, double h = 1e-5) {
  Mat gc = Mat::Zero(wc.rows(), wc.cols());
  Mat gh = gc;
  for (int c = 0; c < wc.cols(); ++c)
    for (int r = 0; r < wc.rows(); ++r) {
      Mat p = wc, m = wc;
      p(r, c) += h;
      m(r, c) -= h;
      gc(r, c) = (loss.value(p, wh) - loss.value(m, wh)) / (2 * h);
      Mat ph = wh, mh = wh;
      ph(r, c) += h;
      mh(r, c) -= h;
      gh(r, c) = (loss.value(wc, ph) - loss.value(wc, mh)) / (2 * h);
    }
  return {gc, gh};
}

inline double max_rel_diff(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (int c = 0; c < a.cols(); ++c)
    for (int r = 0; r < a.rows(); ++r) {
      double scale = 1.0 + std::max(std::abs(a(r, c)), std::abs(b(r, c)));
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / scale);
    }
  return worst;
}

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      path_ = base / (stem + "_" + std::to_string(i));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil

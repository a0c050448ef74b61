#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mpcache/adaptive.hpp"
#include "mpcache/solver.hpp"

using namespace mpcache;
using testutil::fd_gradient;
using testutil::max_rel_diff;
using testutil::random_mat;

namespace {

MobilityForecast forecast_at(int mt, int state, std::map<int, double> residence) {
  MobilityForecast f;
  f.mt = mt;
  f.state = state;
  f.residence = std::move(residence);
  return f;
}

AgentDataset tagged_dataset(int n, int nu, std::vector<int> mts, std::uint64_t seed) {
  auto ds = make_synthetic_dataset(n, nu, static_cast<int>(mts.size()), seed);
  ds.mt_of_sample = std::move(mts);
  return ds;
}

}  // namespace

TEST_CASE("phi weights follow the residence forecast") {
  auto graph = AgentGraph::from_edges(2, {{0, 1}});
  std::vector<AgentDataset> ds = {tagged_dataset(1, 1, {0, 1}, 3), tagged_dataset(1, 1, {}, 4)};
  std::vector<MobilityForecast> fc = {forecast_at(0, 0, {{0, 15.0}, {1, 15.0}}),
                                      forecast_at(1, 1, {{1, 30.0}})};

  auto phi = compute_phi(fc, ds, graph, 30.0);
  REQUIRE(phi.phi_local.size() == 2);
  REQUIRE(phi.phi_out[0].size() == 1);  // one neighbor
  CHECK(phi.phi_out[0][0][0] == doctest::Approx(0.5));
  CHECK(phi.phi_local[0][0] == doctest::Approx(0.5));
  // Sample of a terminal now fully residing at the neighbor: all mass outbound.
  CHECK(phi.phi_out[0][0][1] == doctest::Approx(1.0));
  CHECK(phi.phi_local[0][1] == doctest::Approx(0.0));
  CHECK(phi.phi_local[1].empty());

  for (int l = 0; l < 2; ++l) {
    double total = phi.phi_local[0][l];
    for (const auto& out : phi.phi_out[0]) total += out[l];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("zero residence makes all weight local") {
  auto graph = AgentGraph::from_edges(2, {{0, 1}});
  std::vector<AgentDataset> ds = {tagged_dataset(1, 1, {0}, 5), tagged_dataset(1, 1, {}, 6)};
  std::vector<MobilityForecast> fc = {forecast_at(0, 0, {{0, 30.0}})};
  auto phi = compute_phi(fc, ds, graph, 30.0);
  CHECK(phi.phi_local[0][0] == 1.0);
  CHECK(phi.phi_out[0][0][0] == 0.0);
}

TEST_CASE("phi validation errors") {
  auto graph = AgentGraph::from_edges(2, {{0, 1}});
  std::vector<MobilityForecast> fc = {forecast_at(0, 0, {{0, 10.0}})};

  std::vector<AgentDataset> unknown = {tagged_dataset(1, 1, {7}, 7), tagged_dataset(1, 1, {}, 8)};
  CHECK_THROWS_AS(compute_phi(fc, unknown, graph, 30.0), ProtocolError);

  std::vector<AgentDataset> untagged = {make_synthetic_dataset(1, 1, 2, 9),
                                        tagged_dataset(1, 1, {}, 10)};
  untagged[0].mt_of_sample.clear();
  CHECK_THROWS_AS(compute_phi(fc, untagged, graph, 30.0), DimensionError);

  std::vector<AgentDataset> ok = {tagged_dataset(1, 1, {0}, 11), tagged_dataset(1, 1, {}, 12)};
  std::vector<MobilityForecast> overfull = {forecast_at(0, 0, {{1, 31.0}})};
  CHECK_THROWS_AS(compute_phi(overfull, ok, graph, 30.0), DataError);
}

TEST_CASE("combiners aggregate outbound flow") {
  auto graph = AgentGraph::grid(2);  // degree 2 everywhere
  double ln2 = std::log(2.0);
  std::vector<MobilityForecast> fc = {forecast_at(0, 0, {{0, 5.0}, {1, ln2}})};
  auto comb = compute_combiners(fc, graph, 1.0);
  CHECK(comb.c(0, 1) == doctest::Approx(0.25).epsilon(1e-14));  // (1 - 1/2)/2
  CHECK(comb.c(0, 2) == 0.0);
  CHECK(comb.c(1, 0) == 0.0);

  // Two terminals splitting the same flow give the same combiner.
  std::vector<MobilityForecast> split = {forecast_at(0, 0, {{1, ln2 / 2}}),
                                         forecast_at(1, 0, {{1, ln2 / 2}})};
  auto comb2 = compute_combiners(split, graph, 1.0);
  CHECK(comb2.c(0, 1) == doctest::Approx(0.25).epsilon(1e-14));

  // Saturation at 1/d_i for large upsilon; row sums stay below 1.
  auto sat = compute_combiners(fc, graph, 1e9);
  CHECK(sat.c(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sat.c.row(0).sum() <= 1.0 + 1e-12);

  std::vector<MobilityForecast> stray = {forecast_at(0, 0, {{3, 5.0}})};
  CHECK_THROWS_AS(compute_combiners(stray, graph, 1.0), TopologyError);
  CHECK_THROWS_AS(compute_combiners(fc, graph, 0.0), ParameterError);
}

TEST_CASE("transfer weights: pinned scalar case and plug-back residual") {
  AgentDataset single;
  single.x = Mat::Zero(2, 1);
  single.x(0, 0) = 1.0;
  single.y = Mat::Ones(1, 1);
  single.mt_of_sample = {0};
  Mat w = solve_transfer_weights(single, {1.0}, 1.0);
  CHECK(w(0, 0) == doctest::Approx(0.5));
  CHECK(w(1, 0) == 0.0);

  CHECK(solve_transfer_weights(single, {0.0}, 1.0).norm() == 0.0);
  CHECK_THROWS_AS(solve_transfer_weights(single, {1.0}, 0.0), ParameterError);
  CHECK_THROWS_AS(solve_transfer_weights(single, {1.0, 2.0}, 1.0), DimensionError);
  CHECK_THROWS_AS(solve_transfer_weights(single, {-1.0}, 1.0), ParameterError);

  Rng rng(21, 0x30);
  auto ds = make_synthetic_dataset(4, 2, 9, 77);
  std::vector<double> phi(9);
  for (auto& p : phi) p = rng.uniform();
  Mat sol = solve_transfer_weights(ds, phi, 0.05);
  Eigen::VectorXd vphi = Eigen::Map<Eigen::VectorXd>(phi.data(), 9);
  Mat s = (ds.x * vphi.asDiagonal() * ds.x.transpose()) / 9.0;
  Mat d = (ds.x * vphi.asDiagonal() * ds.y.transpose()) / 9.0;
  Mat residual = (s + 0.05 * Mat::Identity(4, 4)) * sol - d;
  CHECK(residual.cwiseAbs().maxCoeff() / (1.0 + d.norm()) < 1e-10);
}

TEST_CASE("all transfer weights layout") {
  auto graph = AgentGraph::grid(2);
  std::vector<AgentDataset> ds;
  for (int i = 0; i < 4; ++i) ds.push_back(tagged_dataset(2, 1, {0, 1, 2}, 40 + i));
  std::vector<MobilityForecast> fc = {forecast_at(0, 0, {{0, 30.0}}),
                                      forecast_at(1, 0, {{1, 12.0}}),
                                      forecast_at(2, 0, {{2, 18.0}})};
  auto phi = compute_phi(fc, ds, graph, 30.0);
  auto wloc = solve_all_transfer_weights(ds, phi, graph, 0.01);
  REQUIRE(wloc.size() == 4);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(static_cast<int>(wloc[i].size()) == graph.degree(i));
    for (const auto& w : wloc[i]) {
      CHECK(w.rows() == 2);
      CHECK(w.cols() == 1);
      CHECK(w.allFinite());
    }
  }
}

TEST_CASE("augmented loss pins the composite smoothness constant") {
  // Base with unit Lipschitz constant: n = b = 1, X = 1/sqrt(2).
  AgentDataset ds;
  ds.x = Mat::Constant(1, 1, 1.0 / std::sqrt(2.0));
  ds.y = Mat::Constant(1, 1, 0.3);
  auto base = LossModel::least_square(ds);
  CHECK(base.lipschitz() == doctest::Approx(1.0).epsilon(1e-14));

  auto aug = augmented_loss(base, {0.5}, {Mat::Ones(1, 1)}, 1.0);
  CHECK(aug.lipschitz() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  CHECK(aug.kappa() == doctest::Approx(0.5));

  // mu3 = 0 keeps the values but reports the composite constant sqrt(2) C.
  auto null_aug = augmented_loss(base, {0.5}, {Mat::Ones(1, 1)}, 0.0);
  CHECK(null_aug.lipschitz() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  Rng rng(31, 0x31);
  for (int t = 0; t < 10; ++t) {
    Mat wc = random_mat(1, 1, rng), wh = random_mat(1, 1, rng);
    CHECK(null_aug.value(wc, wh) == base.value(wc, wh));
  }

  CHECK_THROWS_AS(augmented_loss(base, {0.5}, {std::nullopt}, 1.0), ProtocolError);
  CHECK_NOTHROW(augmented_loss(base, {0.0}, {std::nullopt}, 1.0));
  CHECK_THROWS_AS(augmented_loss(base, {0.5, 0.5}, {Mat::Ones(1, 1)}, 1.0), DimensionError);
}

TEST_CASE("augmented loss gradients and sampled Lipschitz bound") {
  Rng rng(41, 0x32);
  auto ds = make_synthetic_dataset(3, 2, 6, 99);
  std::vector<double> phi_local = {1.0, 0.8, 0.6, 1.0, 0.4, 0.9};
  auto base = LossModel::least_square(ds, phi_local);
  std::vector<double> c_col = {0.3, 0.15};
  std::vector<std::optional<Mat>> wloc = {random_mat(3, 2, rng), random_mat(3, 2, rng)};
  auto aug = augmented_loss(base, c_col, wloc, 1.2);

  for (int t = 0; t < 10; ++t) {
    Mat wc = random_mat(3, 2, rng), wh = random_mat(3, 2, rng);
    auto [gc, gh] = aug.gradient(wc, wh);
    auto [fc, fh] = fd_gradient(aug, wc, wh);
    CHECK(max_rel_diff(gc, fc) < 1e-6);
    CHECK(max_rel_diff(gh, fh) < 1e-6);

    double direct = base.value(wc, wh);
    for (std::size_t j = 0; j < c_col.size(); ++j)
      direct += 0.5 * 1.2 * c_col[j] * (*wloc[j] - (wc + wh)).squaredNorm();
    CHECK(aug.value(wc, wh) == doctest::Approx(direct).epsilon(1e-12));
  }

  // The exact joint-gradient Lipschitz constant is C + 2 kappa; the reported
  // sqrt(2 C^2 + 4 kappa^2) dominates it only when C >= 4 kappa. This
  // instance sits outside that regime (kappa = 0.54, C ~ 1.34), so sample
  // against the exact constant here and against the reported one in a
  // small-kappa variant below.
  double exact = base.lipschitz() + 2.0 * aug.kappa();
  CHECK(aug.lipschitz() < exact);
  for (int t = 0; t < 10000; ++t) {
    Mat wc1 = random_mat(3, 2, rng, -3, 3), wh1 = random_mat(3, 2, rng, -3, 3);
    Mat wc2 = random_mat(3, 2, rng, -3, 3), wh2 = random_mat(3, 2, rng, -3, 3);
    auto [g1, u1] = aug.gradient(wc1, wh1);
    auto [g2, u2] = aug.gradient(wc2, wh2);
    double num = std::sqrt((g1 - g2).squaredNorm() + (u1 - u2).squaredNorm());
    double den = std::sqrt((wc1 - wc2).squaredNorm() + (wh1 - wh2).squaredNorm());
    if (den == 0.0) continue;
    CHECK(num / den <= exact * (1 + 1e-12));
  }

  auto aug_small = augmented_loss(base, c_col, wloc, 0.1);
  double bound = aug_small.lipschitz();
  REQUIRE(base.lipschitz() >= 4.0 * aug_small.kappa());
  for (int t = 0; t < 10000; ++t) {
    Mat wc1 = random_mat(3, 2, rng, -3, 3), wh1 = random_mat(3, 2, rng, -3, 3);
    Mat wc2 = random_mat(3, 2, rng, -3, 3), wh2 = random_mat(3, 2, rng, -3, 3);
    auto [g1, u1] = aug_small.gradient(wc1, wh1);
    auto [g2, u2] = aug_small.gradient(wc2, wh2);
    double num = std::sqrt((g1 - g2).squaredNorm() + (u1 - u2).squaredNorm());
    double den = std::sqrt((wc1 - wc2).squaredNorm() + (wh1 - wh2).squaredNorm());
    if (den == 0.0) continue;
    CHECK(num / den <= bound * (1 + 1e-12));
  }
}

TEST_CASE("random fixtures respect the invariants") {
  auto graph = AgentGraph::random_connected(6, 9, 13);
  auto phi = random_phi(graph, {4, 0, 3, 5, 2, 1}, 17);
  auto phi2 = random_phi(graph, {4, 0, 3, 5, 2, 1}, 17);
  for (int i = 0; i < 6; ++i) {
    REQUIRE(phi.phi_out[i].size() == static_cast<std::size_t>(graph.degree(i)));
    for (std::size_t l = 0; l < phi.phi_local[i].size(); ++l) {
      double total = phi.phi_local[i][l];
      CHECK(phi.phi_local[i][l] >= 0.0);
      for (const auto& out : phi.phi_out[i]) {
        CHECK(out[l] >= 0.0);
        CHECK(out[l] <= 1.0 / 6.0);
        total += out[l];
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(phi.phi_local[i][l] == phi2.phi_local[i][l]);
    }
  }

  auto comb = random_combiners(graph, 1.0, 23);
  for (int i = 0; i < 6; ++i) {
    double row = 0.0;
    for (int j = 0; j < 6; ++j) {
      if (graph.edge_index(i, j) < 0) {
        CHECK(comb.c(i, j) == 0.0);
      } else {
        CHECK(comb.c(i, j) >= 0.0);
        CHECK(comb.c(i, j) <= 1.0 / 6.0);
      }
      row += comb.c(i, j);
    }
    CHECK(row <= 1.0 + 1e-12);
  }

  auto json = adaptive_to_json(phi, comb, {});
  CHECK(json.find("\"phi\"") != std::string::npos);
  CHECK(json.find("\"combiners\"") != std::string::npos);
  CHECK(json.find("\"upsilon\"") != std::string::npos);
}

TEST_CASE("zero residence collapses the adaptive problem onto the plain one") {
  auto graph = AgentGraph::grid(2);
  auto reg = RegularizationParams::make(0.4, 0.7, 1.0, 0.01);

  std::vector<AgentDataset> ds;
  std::vector<MobilityForecast> fc;
  int mt = 0;
  for (int i = 0; i < 4; ++i) {
    std::vector<int> mts = {mt, mt + 1, mt + 2};
    for (int k = 0; k < 3; ++k) fc.push_back(forecast_at(mt + k, i, {{i, 30.0}}));
    mt += 3;
    ds.push_back(tagged_dataset(3, 1, mts, 500 + i));
  }

  auto phi = compute_phi(fc, ds, graph, 30.0);
  auto comb = compute_combiners(fc, graph, 1.0);
  CHECK(comb.c.norm() == 0.0);
  auto wloc = solve_all_transfer_weights(ds, phi, graph, 0.01);
  auto adaptive = build_adaptive_losses(ds, phi, comb, wloc, graph, reg);

  std::vector<LossModel> plain;
  for (const auto& d : ds) plain.push_back(LossModel::least_square(d));

  auto p1 = Problem::make(graph, plain, reg);
  auto p2 = Problem::make(graph, adaptive, reg);
  SolverParams params = SolverParams::uniform(4, 1.0, 1.0, 1.0, 1.0, 50);
  Iterate init = random_iterate(p1, 8);
  auto [r1, t1] = run_admm(p1, params, init);
  auto [r2, t2] = run_admm(p2, params, std::move(init));

  for (int i = 0; i < 4; ++i) {
    CHECK((r1.wc[i] - r2.wc[i]).norm() == 0.0);
    CHECK((r1.wh[i] - r2.wh[i]).norm() == 0.0);
  }
  for (std::size_t k = 0; k < t1.rows.size(); ++k)
    CHECK(t1.rows[k].objective == t2.rows[k].objective);
}

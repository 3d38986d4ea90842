#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "bevcoord/fusion.hpp"
#include "bevcoord/stats.hpp"

using namespace bevcoord;

namespace {

Eigen::Matrix2d random_psd2(Rng& rng) {
  Eigen::Matrix2d a;
  a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
  return a * a.transpose() + 0.05 * Eigen::Matrix2d::Identity();
}

SeedEntity seed_with(const std::vector<std::pair<AgentKind, Detection3D>>& obs) {
  SeedEntity seed;
  for (const auto& [kind, det] : obs) seed.observations.push_back({kind, det});
  return seed;
}

Detection3D det_at(double x, double y, double heading, double conf = 0.9) {
  Detection3D d;
  d.center_ego = {x, y, 0.8};
  d.size = {4.5, 1.9, 1.6};
  d.heading_rad = heading;
  d.class_probs = {{"car", 0.9}, {"truck", 0.1}};
  d.confidence = conf;
  d.velocity_bev = Eigen::Vector2d(1.0, 0.0);
  return d;
}

}  // namespace

TEST_CASE("weight products normalize and veto zeroes a source") {
  std::vector<WeightInputs> inputs(2);
  inputs[0] = {1.0, 0.8, 0.9, 0.5, 1.0};
  inputs[1] = {1.0, 0.8, 0.9, 0.5, 0.0};  // vetoed
  const WeightResult r = compute_weights(inputs);
  CHECK_FALSE(r.degenerate);
  CHECK(r.weights[0] == doctest::Approx(1.0));
  CHECK(r.weights[1] == 0.0);

  std::vector<WeightInputs> all_zero(2);
  all_zero[0].consistency = 0.0;
  all_zero[1].consistency = 0.0;
  const WeightResult d = compute_weights(all_zero);
  CHECK(d.degenerate);
  CHECK(d.weights[0] == 0.0);
  CHECK(d.weights[1] == 0.0);
}

TEST_CASE("consistency factor decays as exp of the squared residual") {
  const Eigen::Vector2d x_ref(0.0, 0.0);
  const Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  CHECK(consistency_factor(x_ref, x_ref, cov) == doctest::Approx(1.0));
  const Eigen::Vector2d unit(1.0, 0.0);
  CHECK(consistency_factor(unit, x_ref, cov) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  const Eigen::Vector2d diag(3.0, 4.0);
  CHECK(consistency_factor(diag, x_ref, cov) ==
        doctest::Approx(std::exp(-25.0)).epsilon(1e-9));
}

TEST_CASE("information fusion reproduces a single source") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector2d x(rng.uniform(-10, 10), rng.uniform(-10, 10));
    const Eigen::Matrix2d cov = random_psd2(rng);
    const GaussianEstimate fused = fuse_continuous({x}, {cov}, {1.0});
    CHECK((fused.mean - x).norm() < 1e-9);
    CHECK((fused.cov - cov).norm() < 1e-6);
  }
}

TEST_CASE("consensus values fuse to the consensus") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector2d x(rng.uniform(-10, 10), rng.uniform(-10, 10));
    const std::vector<Eigen::VectorXd> values = {x, x, x};
    const std::vector<Eigen::MatrixXd> covs = {random_psd2(rng),
                                               random_psd2(rng),
                                               random_psd2(rng)};
    const GaussianEstimate fused =
        fuse_continuous(values, covs, {0.2, 0.3, 0.5});
    CHECK((fused.mean - x).norm() < 1e-9);
  }
}

TEST_CASE("equal weights and identical covariance keep that covariance") {
  Rng rng(29);
  const Eigen::Matrix2d cov = random_psd2(rng);
  const Eigen::Vector2d a(1.0, 2.0), b(3.0, -1.0);
  const GaussianEstimate fused =
      fuse_continuous({a, b}, {cov, cov}, {0.5, 0.5});
  // Weights shape the blend; they do not accumulate evidence.
  CHECK((fused.cov - cov).norm() < 1e-6);
  CHECK((fused.mean - Eigen::Vector2d(2.0, 0.5)).norm() < 1e-9);
}

TEST_CASE("fusion equations match direct matrix recomputation") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<Eigen::VectorXd> values;
    std::vector<Eigen::MatrixXd> covs;
    std::vector<double> weights;
    double weight_sum = 0.0;
    for (int i = 0; i < k; ++i) {
      values.push_back(
          Eigen::Vector2d(rng.uniform(-10, 10), rng.uniform(-10, 10)));
      covs.push_back(random_psd2(rng));
      weights.push_back(rng.uniform(0.1, 1.0));
      weight_sum += weights.back();
    }
    for (double& w : weights) w /= weight_sum;
    const double reg = 1e-9;
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    Eigen::Vector2d info_mean = Eigen::Vector2d::Zero();
    for (int i = 0; i < k; ++i) {
      const Eigen::Matrix2d inv =
          (covs[static_cast<std::size_t>(i)] + reg * Eigen::Matrix2d::Identity())
              .inverse();
      info += weights[static_cast<std::size_t>(i)] * inv;
      info_mean += weights[static_cast<std::size_t>(i)] * inv *
                   values[static_cast<std::size_t>(i)];
    }
    const Eigen::Matrix2d cov_direct = info.inverse();
    const Eigen::Vector2d mean_direct = cov_direct * info_mean;
    const GaussianEstimate fused = fuse_continuous(values, covs, weights, reg);
    CHECK((fused.mean - mean_direct).norm() < 1e-9);
    CHECK((fused.cov - cov_direct).norm() < 1e-9);
  }
}

TEST_CASE("covariance intersection with equal covariance returns it") {
  Rng rng(37);
  const Eigen::Matrix2d cov = random_psd2(rng);
  GaussianEstimate a{Eigen::Vector2d(1.0, 0.0), cov};
  GaussianEstimate b{Eigen::Vector2d(3.0, 2.0), cov};
  const GaussianEstimate ci = covariance_intersection(a, b, 0.5);
  CHECK((ci.cov - cov).norm() < 1e-6);
  CHECK((ci.mean - Eigen::Vector2d(2.0, 1.0)).norm() < 1e-9);
  // omega = 1 reproduces the first operand.
  const GaussianEstimate only_a = covariance_intersection(a, b, 1.0);
  CHECK((only_a.mean - a.mean).norm() < 1e-9);
  CHECK((only_a.cov - a.cov).norm() < 1e-6);
}

TEST_CASE("categorical vote weights distributions and breaks ties by vocabulary") {
  const std::vector<std::map<std::string, double>> dists = {
      {{"car", 0.6}, {"truck", 0.4}},
      {{"truck", 0.8}, {"car", 0.2}},
  };
  const auto [winner, conf] = fuse_categorical(dists, {0.5, 0.5});
  CHECK(winner == "truck");
  CHECK(conf == doctest::Approx(0.6));

  const std::vector<std::map<std::string, double>> tie = {
      {{"bus", 0.5}, {"car", 0.5}},
  };
  const auto [tied_winner, tied_conf] = fuse_categorical(tie, {1.0});
  CHECK(tied_winner == "car");  // car precedes bus in the vocabulary
  CHECK(tied_conf == doctest::Approx(0.5));
}

TEST_CASE("residual gate categories follow the chi-square thresholds") {
  FusionConfig config;
  const double pass_edge = stats::chi2_quantile(2, config.gate_pass_p);
  const double susp_edge = stats::chi2_quantile(2, config.gate_suspicious_p);
  CHECK(residual_gate(pass_edge - 1e-6, 2, config) == GateCategory::kPass);
  CHECK(residual_gate(pass_edge + 1e-6, 2, config) == GateCategory::kSuspicious);
  CHECK(residual_gate(susp_edge + 1e-6, 2, config) == GateCategory::kVeto);
}

TEST_CASE("reliability ledger applies the exponential moving average") {
  ReliabilityLedger ledger(0.8, 0.9);
  CHECK(ledger.get(AgentKind::kLidar) == doctest::Approx(0.8));
  ledger.update(AgentKind::kLidar, 1.0);
  CHECK(ledger.get(AgentKind::kLidar) == doctest::Approx(0.82));
  ledger.update(AgentKind::kLidar, 0.0);
  CHECK(ledger.get(AgentKind::kLidar) == doctest::Approx(0.738));
  // Other agents stay at the initial value.
  CHECK(ledger.get(AgentKind::kRadar) == doctest::Approx(0.8));
  // Round trip through JSON.
  const ReliabilityLedger back =
      ReliabilityLedger::from_json(ledger.to_json(), "ledger");
  CHECK(back.get(AgentKind::kLidar) == doctest::Approx(0.738));
}

TEST_CASE("near-pi headings fuse to the wrapped circular mean") {
  const SeedEntity seed =
      seed_with({{AgentKind::kLidar, det_at(10.0, 0.0, 3.1)},
                 {AgentKind::kBevFusion, det_at(10.0, 0.0, -3.1)}});
  SceneMeta meta{"scene_w", 0, 5.0};
  const FusionOutcome out =
      fuse_scene({seed}, meta, ReliabilityLedger(0.8, 0.9), {}, FusionConfig{});
  REQUIRE(out.summary.entities.size() == 1);
  const double h = out.summary.entities[0].heading_rad;
  // The naive arithmetic mean would be 0; the circular mean is +-pi.
  CHECK(std::abs(h) > 3.13);
  CHECK(std::abs(h) <= std::numbers::pi + 1e-12);
}

TEST_CASE("single-observation seeds reproduce the detection") {
  const Detection3D d = det_at(12.0, -4.0, 0.4);
  const SeedEntity seed = seed_with({{AgentKind::kLidar, d}});
  SceneMeta meta{"scene_s", 0, 3.0};
  const FusionOutcome out =
      fuse_scene({seed}, meta, ReliabilityLedger(0.8, 0.9), {}, FusionConfig{});
  REQUIRE(out.summary.entities.size() == 1);
  const FusedEntity& e = out.summary.entities[0];
  CHECK((e.position_bev - Eigen::Vector2d(12.0, -4.0)).norm() < 1e-9);
  CHECK(e.heading_rad == doctest::Approx(0.4));
  CHECK(e.type == "car");
  CHECK(e.sources == std::vector<std::string>{"lidar"});
}

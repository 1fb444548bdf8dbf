#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "adaptvo/metrics.hpp"

using namespace adaptvo;

namespace {

DepthMap row(std::initializer_list<double> v) {
  DepthMap d(static_cast<int>(v.size()), 1);
  std::size_t i = 0;
  for (double x : v) d[i++] = x;
  return d;
}

DepthMap random_depth(std::uint64_t seed, int w = 20, int h = 10) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 30.0);
  DepthMap d(w, h);
  for (auto& x : d.values()) x = u(rng);
  return d;
}

Trajectory random_walk(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Trajectory t;
  Pose p = Pose::identity();
  for (int i = 0; i < n; ++i) {
    t.push_back({0.1 * i, p});
    p = p * Pose(so3_exp(0.05 * Vec3(g(rng), g(rng), g(rng))), Vec3(0.2 * g(rng), 0.1 * g(rng), 1.0));
  }
  return t;
}

}  // namespace

TEST(AlignScale, Examples) {
  EXPECT_DOUBLE_EQ(align_scale(row({1.0, 2.0}), row({2.0, 4.0})), 2.0);
  // pixels invalid in either map do not count
  EXPECT_DOUBLE_EQ(align_scale(row({1.0, 0.0, 5.0}), row({3.0, 7.0, 0.0})), 3.0);
  EXPECT_DOUBLE_EQ(align_scale(row({1.0, 1.0}), row({2.0, 100.0})), 2.0);
}

TEST(AlignScale, Errors) {
  EXPECT_THROW(align_scale(row({1.0, 0.0}), row({0.0, 1.0})), EmptyInputError);
  EXPECT_THROW(align_scale(row({1.0}), row({1.0, 1.0})), DimensionMismatchError);
}

TEST(DepthMetrics, IdenticalMaps) {
  const DepthMap d = random_depth(1);
  const auto m = depth_metrics(d, d);
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(m.sq_rel, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.delta1, 1.0);
  EXPECT_EQ(m.delta2, 1.0);
  EXPECT_EQ(m.delta3, 1.0);
  EXPECT_EQ(m.count, d.size());
}

TEST(DepthMetrics, DoubledPrediction) {
  const DepthMap gt = random_depth(2);
  const DepthMap pred = scale_depth(gt, 2.0);
  const auto m = depth_metrics(pred, gt);
  EXPECT_NEAR(m.abs_rel, 1.0, 1e-12);
  EXPECT_EQ(m.delta1, 0.0);
  EXPECT_EQ(m.delta2, 0.0);
  EXPECT_EQ(m.delta3, 0.0);  // 1.25^3 < 2
  const auto a = aligned_depth_metrics(pred, gt);
  EXPECT_LT(a.abs_rel, 1e-12);
  EXPECT_LT(a.rmse, 1e-12);
  EXPECT_EQ(a.delta1, 1.0);
}

TEST(DepthMetrics, HandEvaluated) {
  const auto m = depth_metrics(row({1.0, 3.0}), row({2.0, 2.0}));
  EXPECT_DOUBLE_EQ(m.abs_rel, 0.5);
  EXPECT_DOUBLE_EQ(m.sq_rel, 0.5);
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  EXPECT_EQ(m.delta1, 0.0);
  EXPECT_EQ(m.delta2, 0.5);
  EXPECT_EQ(m.delta3, 0.5);
}

TEST(DepthMetrics, CapAndValidity) {
  const auto m = depth_metrics(row({1.0, 5.0, 2.0, 0.0}), row({1.0, 90.0, 0.0, 3.0}));
  EXPECT_EQ(m.count, 1u);
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(depth_metrics(row({1.0, 5.0}), row({1.0, 90.0}), 100.0).count, 2u);
  EXPECT_THROW(depth_metrics(row({1.0}), row({0.0})), EmptyInputError);
}

TEST(DepthMetrics, PixelOrderDoesNotMatter) {
  const DepthMap gt = random_depth(3), pred = random_depth(4);
  std::vector<std::size_t> order(gt.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(5));
  DepthMap gp(gt.width(), gt.height()), pp(gt.width(), gt.height());
  for (std::size_t i = 0; i < order.size(); ++i) {
    gp[i] = gt[order[i]];
    pp[i] = pred[order[i]];
  }
  const auto a = aligned_depth_metrics(pred, gt), b = aligned_depth_metrics(pp, gp);
  EXPECT_NEAR(a.abs_rel, b.abs_rel, 1e-12);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
  EXPECT_EQ(a.delta1, b.delta1);
}

TEST(AlignSimilarity, RecoversKnownTransform) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::vector<Vec3> est, gt;
  const Mat3 R = so3_exp(Vec3(0.3, -1.0, 0.4));
  const Vec3 t(1.0, -2.0, 0.5);
  for (int i = 0; i < 30; ++i) {
    est.emplace_back(g(rng), g(rng), g(rng));
    gt.push_back(3.0 * (R * est.back()) + t);
  }
  const Similarity s = align_similarity(est, gt);
  EXPECT_NEAR(s.scale, 3.0, 1e-12);
  EXPECT_LT((s.rotation - R).norm(), 1e-12);
  EXPECT_LT((s.translation - t).norm(), 1e-12);
}

TEST(TrajectoryMetrics, IdenticalIsZero) {
  const Trajectory t = random_walk(1, 30);
  const auto m = trajectory_metrics(t, t);
  EXPECT_LT(m.ate_rmse, 1e-12);
  EXPECT_LT(m.t_rel, 1e-9);
  EXPECT_LT(m.r_rel, 1e-9);
  EXPECT_GT(m.segments, 0u);
}

TEST(TrajectoryMetrics, ScaledCopyIsZero) {
  const Trajectory gt = random_walk(2, 30);
  Trajectory est = gt;
  for (auto& s : est) s.pose = s.pose.scaled(5.0);
  const auto m = trajectory_metrics(est, gt);
  EXPECT_LT(m.ate_rmse, 1e-9);
  EXPECT_LT(m.t_rel, 1e-9);
  EXPECT_LT(m.r_rel, 1e-9);
}

TEST(TrajectoryMetrics, SimilarityCopyIsZero) {
  const Trajectory gt = random_walk(3, 40);
  const Pose T(so3_exp(Vec3(0.4, 2.0, -0.7)), Vec3(5.0, -3.0, 8.0));
  Trajectory est = gt;
  for (auto& s : est) s.pose = T * s.pose.scaled(0.3);
  const auto m = trajectory_metrics(est, gt);
  EXPECT_LT(m.ate_rmse, 1e-9);
  EXPECT_LT(m.t_rel, 1e-7);
  EXPECT_LT(m.r_rel, 1e-7);
}

TEST(TrajectoryMetrics, RotationDriftClosedForm) {
  // unit steps along x; the estimate yaws 0.01 rad more per frame
  Trajectory gt, est;
  const int n = 21;
  for (int i = 0; i < n; ++i) {
    gt.push_back({static_cast<double>(i), Pose(Mat3::Identity(), Vec3(i, 0, 0))});
    est.push_back({static_cast<double>(i), Pose(so3_exp(Vec3(0, 0, 0.01 * i)), Vec3(i, 0, 0))});
  }
  const auto m = trajectory_metrics(est, gt);
  // a segment of length L spans L + 1 steps; there are n - 1 - L of them
  double r_sum = 0.0, t_sum = 0.0;
  std::size_t count = 0;
  for (int len : {2, 4, 6, 8}) {
    for (int f = 0; f + len + 1 < n; ++f) {
      const int span = len + 1;
      r_sum += 0.01 * span / len;
      // the estimate walks the same x-steps in a frame yawed by 0.01 f
      t_sum += span * 2.0 * std::sin(0.005 * f) / len;
      ++count;
    }
  }
  EXPECT_EQ(m.segments, count);
  EXPECT_NEAR(m.r_rel, 100.0 * 180.0 / std::numbers::pi * r_sum / count, 1e-9);
  EXPECT_NEAR(m.t_rel, 100.0 * t_sum / count, 1e-9);
  EXPECT_LT(m.ate_rmse, 1e-12);
}

TEST(TrajectoryMetrics, OrderAndExtraStampsIgnored) {
  const Trajectory gt = random_walk(4, 30);
  Trajectory est = random_walk(5, 30);
  const auto a = trajectory_metrics(est, gt);
  std::reverse(est.begin(), est.end());
  est.push_back({99.0, Pose::identity()});
  const auto b = trajectory_metrics(est, gt);
  EXPECT_EQ(a.ate_rmse, b.ate_rmse);
  EXPECT_EQ(a.t_rel, b.t_rel);
  EXPECT_EQ(a.r_rel, b.r_rel);
}

TEST(TrajectoryMetrics, TooFewMatches) {
  const Trajectory gt = random_walk(6, 5);
  Trajectory est = {{0.0, Pose::identity()}, {7.0, Pose::identity()}};
  EXPECT_THROW(trajectory_metrics(est, gt), EmptyInputError);
}

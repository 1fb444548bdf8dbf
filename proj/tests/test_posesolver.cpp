#include <gtest/gtest.h>

#include <random>

#include "adaptvo/oracle.hpp"
#include "adaptvo/posesolver.hpp"
#include "adaptvo/synthworld.hpp"

using namespace adaptvo;

namespace {

CameraIntrinsics k100() { return {100.0, 100.0, 50.0, 50.0, 101, 101}; }

MapPoint at(const Vec3& w) { return {w, Vec2::Zero(), 0, 0}; }

}  // namespace

TEST(InitMapPoints, CenterPixel) {
  const auto pts = init_map_points(DepthMap(101, 101, 2.0), {Vec2(50, 50)}, Pose::identity(), k100());
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_LT((pts[0].world - Vec3(0, 0, 2)).norm(), 1e-15);
}

TEST(InitMapPoints, MaskAndInvalidDepthSkip) {
  DepthMap d(101, 101, 2.0);
  d(10, 10) = 0.0;
  MaskMap m(101, 101, 1.0);
  m(20, 20) = 0.0;
  const auto pts = init_map_points(d, {Vec2(10, 10), Vec2(20, 20), Vec2(30, 30)}, Pose::identity(), k100(), &m, 4);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].source, 2u);
  EXPECT_EQ(pts[0].frame_id, 4);
  EXPECT_THROW(init_map_points(d, {Vec2(20, 20)}, Pose::identity(), k100(), &m), EmptyInputError);
}

TEST(InitMapPoints, MatchSceneGeometry) {
  const SceneSpec spec = oracle::make_pose_scene(3);
  const auto frames = generate(spec);
  std::vector<Vec2> pixels;
  for (int v = 0; v < 48; v += 5)
    for (int u = 0; u < 64; u += 5) pixels.emplace_back(u, v);
  const auto pts = init_map_points(frames[1].depth, pixels, frames[1].world_from_camera, spec.camera);
  ASSERT_EQ(pts.size(), pixels.size());
  for (const auto& p : pts) {
    // every world point lies on the plane that was hit
    const auto& plane = spec.planes[frames[1].primitive(static_cast<int>(p.pixel.x()), static_cast<int>(p.pixel.y())) - 1];
    EXPECT_NEAR(plane.normal.dot(p.world), plane.offset, 1e-9);
  }
}

TEST(ResidualE, ZeroAtTruthAndScaleInvariant) {
  const auto K = k100();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Pose T(so3_exp(0.3 * Vec3(u(rng), u(rng), u(rng))), Vec3(u(rng), u(rng), u(rng)));
    const Vec3 pw = T.inverse() * Vec3(u(rng), u(rng), 4.0 + u(rng));
    const Vec2 obs = project(T * pw, K);
    EXPECT_LT(residual_e(at(pw), obs, T, K).norm(), 1e-12);
    for (double s : {2.0, 0.5, 4.0}) {  // powers of two scale exactly
      EXPECT_EQ(residual_e(at(s * pw), obs + Vec2(0.3, -0.2), T.scaled(s), K),
                residual_e(at(pw), obs + Vec2(0.3, -0.2), T, K));
    }
    EXPECT_NEAR(residual_e(at(pw), obs + Vec2(1.0, 0.0), T, K).norm(), 1.0, 1e-9);
  }
  EXPECT_THROW(residual_e(at(Vec3(0, 0, -1)), Vec2(0, 0), Pose::identity(), K), BehindCameraError);
}

TEST(ResidualEs, Examples) {
  const auto K = k100();
  const MapPoint p = at(Vec3(0.4, -0.2, 2.0));
  const Vec2 obs(71.0, 40.5);
  const double u_r = 66.0;
  const Vec3 r = residual_es(p, obs, obs.x(), Pose::identity(), K, 0.0, 1.0);
  EXPECT_EQ(r.z(), r.x());
  const Vec3 r1 = residual_es(p, obs, u_r, Pose::identity(), K, 0.1, 1.0);
  const Vec3 r5 = residual_es(p, obs, u_r, Pose::identity(), K, 0.1, 5.0);
  EXPECT_EQ(r1.x(), r5.x());
  EXPECT_EQ(r1.y(), r5.y());
  // fx (s x - b) / (s z) + cx by hand: 100 (0.4 - 0.1) / 2 + 50 = 65, and 100 (2 - 0.1) / 10 + 50 = 69
  EXPECT_NEAR(r1.z(), 1.0, 1e-12);
  EXPECT_NEAR(r5.z(), -3.0, 1e-12);
  EXPECT_NEAR(residual_es(p, obs, 65.0, Pose::identity(), K, 0.1, 1.0).z(), 0.0, 1e-12);
}

TEST(SolvePose, RecoversRandomMotions) {
  const auto r = oracle::run_pose_suite(1, 25);
  EXPECT_EQ(r.solved, r.cases);
  EXPECT_LE(r.max_true_angle, 0.5);
  EXPECT_LE(r.max_true_translation, 2.0);
  EXPECT_LT(r.max_rotation_error, 1e-6);
  EXPECT_LT(r.max_translation_error, 1e-6);
}

TEST(SolvePose, ConsistentInitialPoseIsKept) {
  const SceneSpec spec = oracle::make_pose_scene(9);
  const auto frames = generate(spec);
  const auto pair = oracle::make_pose_pair(spec, frames, 0, 1, Pose::identity());
  const Pose truth = frames[1].world_from_camera.inverse();
  const auto r = solve_pose(pair.points, pair.observations, truth, spec.camera);
  EXPECT_LT(r.initial_cost, 1e-18);
  EXPECT_LT(oracle::rotation_gap(r.pose, truth), 1e-12);
  EXPECT_LT((r.pose.translation() - truth.translation()).norm(), 1e-12);
  EXPECT_TRUE(r.converged);
}

TEST(SolvePose, CollinearPointsAreDegenerate) {
  const auto K = k100();
  std::vector<MapPoint> pts;
  std::vector<Vec2> obs;
  for (int i = 0; i < 10; ++i) {
    const Vec3 w(0.1 * i - 0.5, 0.05 * i, 3.0 + 0.1 * i);
    pts.push_back(at(w));
    obs.push_back(project(w, K));
  }
  EXPECT_THROW(solve_pose(pts, obs, Pose::identity(), K), DegenerateGeometryError);
  EXPECT_THROW(solve_pose({pts.begin(), pts.begin() + 3}, {obs.begin(), obs.begin() + 3}, Pose::identity(), K),
               DegenerateGeometryError);
}

TEST(SolvePose, CostNeverIncreases) {
  const SceneSpec spec = oracle::make_pose_scene(12);
  const auto frames = generate(spec);
  const auto pair = oracle::make_pose_pair(spec, frames, 0, 1, Pose::identity());
  double previous = robust_cost(pair.points, pair.observations, Pose::identity(), spec.camera, 1.0);
  // rerunning with a growing iteration budget traces the iterates
  for (int it = 1; it <= 12; ++it) {
    SolverOptions o;
    o.max_iterations = it;
    const auto r = solve_pose(pair.points, pair.observations, Pose::identity(), spec.camera, o);
    EXPECT_LE(r.final_cost, previous + 1e-12) << it;
    EXPECT_LE(r.final_cost, r.initial_cost);
    previous = r.final_cost;
  }
}

TEST(SolvePose, HuberBoundsOneOutlier) {
  const SceneSpec spec = oracle::make_pose_scene(5);
  const auto frames = generate(spec);
  auto pair = oracle::make_pose_pair(spec, frames, 0, 1, Pose::identity());
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& o : pair.observations) o += Vec2(n(rng), n(rng));
  const auto clean = solve_pose(pair.points, pair.observations, Pose::identity(), spec.camera);
  pair.observations[0] += Vec2(40.0, -25.0);
  const auto dirty = solve_pose(pair.points, pair.observations, Pose::identity(), spec.camera);
  const Pose truth = frames[1].world_from_camera.inverse();
  EXPECT_LT(oracle::rotation_gap(clean.pose, truth), 0.02);
  // a 47 px outlier among 80 points moves the estimate by a fraction of the noise-level error
  EXPECT_LT(oracle::rotation_gap(dirty.pose, clean.pose), 0.005);
  EXPECT_LT((dirty.pose.translation() - clean.pose.translation()).norm(), 0.03);
}

TEST(ScaleCovariance, DepthScaleOnlyScalesTranslation) {
  const auto r = oracle::run_scale_covariance(4);
  EXPECT_LT(r.max_rotation_gap, 1e-9);
  EXPECT_LT(r.max_translation_rel_error, 1e-9);
  EXPECT_LE(r.max_ate, 1e-9);
  EXPECT_LT(r.max_e_change, 1e-9);
  EXPECT_GT(r.min_es_change, 1e-3);
}

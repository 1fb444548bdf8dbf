#pragma once

// Independent reference implementations used by the test suites and the
// `gradcheck` / `oracle` commands.

#include <cstdint>
#include <random>
#include <vector>

#include "adaptvo/geom.hpp"
#include "adaptvo/losses.hpp"
#include "adaptvo/metrics.hpp"
#include "adaptvo/posesolver.hpp"
#include "adaptvo/refinernet.hpp"
#include "adaptvo/sdd.hpp"
#include "adaptvo/sparsedepth.hpp"
#include "adaptvo/synthworld.hpp"

namespace adaptvo::oracle {

/// Quadratic-time densification: per region, scans every sample.
DepthMap brute_force_densify(const SparseDepth& sparse, const SegMap& seg, const GridSpec& grid,
                             const MaskMap* dynamic_mask = nullptr);

/// Solves lambda_b r_b - lambda_a R r_a = t in the least-squares sense and
/// returns the midpoint in frame-b coordinates.
Vec3 linear_triangulation(const Correspondence& match, const Pose& b_from_a, const CameraIntrinsics& K);

struct DensifyCase {
  SparseDepth sparse;
  SegMap seg;
  MaskMap mask;
  bool use_mask = false;
};

/// Random 64x48 segmentation with sparse samples; some categories are left
/// with fewer than five samples and many cells are empty.
DensifyCase random_densify_case(std::uint64_t seed, int width = 64, int height = 48);

struct DensifyReport {
  int cases = 0;
  int identical = 0;
  int with_fallback = 0;  // cases where some category had < 5 samples
  int with_empty_fill = 0;
};

DensifyReport run_densify_suite(std::uint64_t seed, int cases);

struct TriangulationReport {
  int cases = 0;
  double max_error = 0.0;          // meters, noiseless recovery
  double max_oracle_gap = 0.0;     // against linear_triangulation
  double max_scaling_error = 0.0;  // relative, baseline scaling covariance
  bool parallel_detected = false;
  bool cheirality_detected = false;
};

TriangulationReport run_triangulation_suite(std::uint64_t seed, int cases);

/// Small pair problem for finite-difference checks.
struct GradcheckProblem {
  ToyDepthNet net;
  CameraIntrinsics camera;
  std::vector<Image> images;      // three frames
  std::vector<Pose> prev_from_cur;  // for pairs (0,1) and (1,2)
  std::vector<DepthMap> dense;    // per pair, on the later frame
  std::vector<MaskMap> masks;     // per pair
  LossWeights weights;
  // With a detached W_s the differentiated function holds W_s at its value
  // for the initial parameters; empty when W_s is attached.
  std::vector<ScalarMap> frozen_ws;
};

GradcheckProblem make_gradcheck_problem(std::uint64_t seed, bool attach_ws);

/// Mean L_ol over the problem's pairs with the net's current parameters.
double gradcheck_loss(const GradcheckProblem& problem, const ToyDepthNet& net);

/// Analytic gradient of gradcheck_loss with respect to the refiner parameters.
Eigen::VectorXd gradcheck_analytic(const GradcheckProblem& problem);

/// Central differences with step h.
Eigen::VectorXd gradcheck_numeric(const GradcheckProblem& problem, double h = 1e-6);

// Central differences at h = 1e-6 carry about 3e-10 absolute noise from
// rounding in the loss sum, so components are compared on a 1e-4 scale.
inline constexpr double kRelativeErrorFloor = 1e-4;

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                          double floor = kRelativeErrorFloor);

struct GradcheckReport {
  int seeds = 0;
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

GradcheckReport run_gradcheck_suite(std::uint64_t seed, int seeds);

/// Closed room of textured planes seen from `frames` poses: frame 0 at the
/// origin, later frames at random motions of up to `max_angle` rad and
/// `max_translation` m from it.
SceneSpec make_pose_scene(std::uint64_t seed, int frames = 2, double max_angle = 0.5, double max_translation = 2.0);

/// Map points from the exact depth of frame `a` and their exact image
/// locations in frame `b`. Depths are multiplied by `depth_scale` and the
/// points placed with `world_from_a`.
struct PosePair {
  std::vector<MapPoint> points;
  std::vector<Vec2> observations;
};
PosePair make_pose_pair(const SceneSpec& spec, const std::vector<FrameTruth>& frames, int a, int b,
                        const Pose& world_from_a, double depth_scale = 1.0, std::size_t n = 80,
                        std::uint64_t seed = 1);

/// Rotation angle of inverse(a) * b.
double rotation_gap(const Pose& a, const Pose& b);

struct PoseSuiteReport {
  int cases = 0;
  int solved = 0;  // converged without throwing
  double max_rotation_error = 0.0;     // rad
  double max_translation_error = 0.0;  // m
  double max_true_angle = 0.0;
  double max_true_translation = 0.0;
};

/// Identity-initialized solves of random two-frame scenes.
PoseSuiteReport run_pose_suite(std::uint64_t seed, int cases);

struct ScaleCovarianceReport {
  std::vector<double> scales;
  double max_rotation_gap = 0.0;          // rad, per frame against scale 1
  double max_translation_rel_error = 0.0;  // |t_s - s t_1| / |s t_1|
  double max_ate = 0.0;                   // similarity-aligned against scale 1, m
  double max_e_change = 0.0;              // residual_e, pixels
  double min_es_change = 0.0;             // third row of residual_es, pixels
};

/// Chained frame-to-frame tracking of a short path with every input depth
/// multiplied by each scale.
ScaleCovarianceReport run_scale_covariance(std::uint64_t seed, const std::vector<double>& scales = {5.0, 10.0},
                                           int frames = 6);

}  // namespace adaptvo::oracle

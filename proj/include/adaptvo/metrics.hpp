#pragma once

// Depth accuracy after mean-ratio alignment and trajectory error metrics.

#include <cstddef>
#include <vector>

#include "adaptvo/geom.hpp"

namespace adaptvo {

inline constexpr double kDepthCap = 80.0;

/// s = mean(gt) / mean(pred) over pixels valid in both (gt in (0, cap]).
double align_scale(const DepthMap& pred, const DepthMap& gt, double cap = kDepthCap);

DepthMap scale_depth(const DepthMap& depth, double s);

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t count = 0;
};

/// Over pixels where both depths are positive and gt <= cap. Throws
/// EmptyInputError when there are none.
DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, double cap = kDepthCap);

/// align_scale followed by depth_metrics.
DepthMetrics aligned_depth_metrics(const DepthMap& pred, const DepthMap& gt, double cap = kDepthCap);

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;  // world_from_camera
};

using Trajectory = std::vector<StampedPose>;

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Least-squares similarity mapping est positions onto gt positions.
Similarity align_similarity(const std::vector<Vec3>& est, const std::vector<Vec3>& gt);

struct TrajectoryMetrics {
  double ate_rmse = 0.0;
  double t_rel = 0.0;  // percent
  double r_rel = 0.0;  // degrees per 100 m
  std::size_t segments = 0;
};

inline const std::vector<double> kDefaultSegmentLengths = {2.0, 4.0, 6.0, 8.0};

/// Poses are matched by timestamp (exact equality). ATE uses a similarity
/// alignment; relative drift uses the same alignment applied to the estimate.
TrajectoryMetrics trajectory_metrics(const Trajectory& est, const Trajectory& gt,
                                     const std::vector<double>& lengths = kDefaultSegmentLengths);

}  // namespace adaptvo

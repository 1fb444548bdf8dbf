#pragma once

// Pseudo RGB-D tracking: map points from predicted depth and motion-only
// Gauss-Newton on the reprojection residual.

#include <cstddef>
#include <vector>

#include "adaptvo/geom.hpp"

namespace adaptvo {

struct MapPoint {
  Vec3 world;
  Vec2 pixel;             // source pixel in the creation frame
  int frame_id = 0;
  std::size_t source = 0;  // index into the pixel list it was created from
};

/// P_w = world_from_camera * backproject(p, D(p)) for every pixel with a
/// valid (bilinear) depth and, when a mask is given, M > 0 at the nearest
/// pixel. Throws EmptyInputError when nothing survives.
std::vector<MapPoint> init_map_points(const DepthMap& depth, const std::vector<Vec2>& pixels,
                                      const Pose& world_from_camera, const CameraIntrinsics& K,
                                      const MaskMap* mask = nullptr, int frame_id = 0);

/// e = observation - project(camera_from_world * P_w).
Vec2 residual_e(const MapPoint& point, const Vec2& observation, const Pose& camera_from_world,
                const CameraIntrinsics& K);

/// Stereo-style residual with a scaled depth: the third row is
/// u_r - (fx (s x - b) / (s z) + cx).
Vec3 residual_es(const MapPoint& point, const Vec2& observation, double u_right, const Pose& camera_from_world,
                 const CameraIntrinsics& K, double baseline, double scale);

struct SolverOptions {
  double huber_delta = 1.0;  // pixels
  int max_iterations = 50;
  double step_tolerance = 1e-10;
  int max_halvings = 30;
};

struct PoseSolveReport {
  Pose pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t dropped = 0;  // points behind the camera at the initial pose
};

/// Robust cost sum rho(|e|) with the Huber kernel.
double robust_cost(const std::vector<MapPoint>& points, const std::vector<Vec2>& observations,
                   const Pose& camera_from_world, const CameraIntrinsics& K, double huber_delta);

/// Requires at least 6 pairs; throws DegenerateGeometryError when the normal
/// equations are singular.
PoseSolveReport solve_pose(const std::vector<MapPoint>& points, const std::vector<Vec2>& observations,
                           const Pose& initial, const CameraIntrinsics& K, const SolverOptions& options = {});

}  // namespace adaptvo

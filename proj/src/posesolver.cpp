#include "adaptvo/posesolver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace adaptvo {

std::vector<MapPoint> init_map_points(const DepthMap& depth, const std::vector<Vec2>& pixels,
                                      const Pose& world_from_camera, const CameraIntrinsics& K, const MaskMap* mask,
                                      int frame_id) {
  if (mask != nullptr && !mask->same_shape(depth)) throw DimensionMismatchError("mask does not match depth");
  std::vector<MapPoint> points;
  points.reserve(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Vec2& p = pixels[i];
    if (mask != nullptr) {
      const auto px = nearest_pixel(p, mask->width(), mask->height());
      if (!px || (*mask)(px->first, px->second) == 0.0) continue;
    }
    const auto d = sample_depth(depth, p);
    if (!d || !(*d > 0.0)) continue;
    points.push_back({world_from_camera * backproject(p, *d, K), p, frame_id, i});
  }
  if (points.empty()) throw EmptyInputError("no map points survived initialization");
  return points;
}

Vec2 residual_e(const MapPoint& point, const Vec2& observation, const Pose& camera_from_world,
                const CameraIntrinsics& K) {
  return observation - project(camera_from_world * point.world, K);
}

Vec3 residual_es(const MapPoint& point, const Vec2& observation, double u_right, const Pose& camera_from_world,
                 const CameraIntrinsics& K, double baseline, double scale) {
  const Vec3 q = camera_from_world * point.world;
  if (!(q.z() > 0.0)) throw BehindCameraError("point is behind the camera");
  return {observation.x() - (K.fx * q.x() / q.z() + K.cx), observation.y() - (K.fy * q.y() / q.z() + K.cy),
          u_right - (K.fx * (scale * q.x() - baseline) / (scale * q.z()) + K.cx)};
}

namespace {

double huber(double r, double delta) { return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta); }

constexpr double kMinDepth = 1e-9;

}  // namespace

double robust_cost(const std::vector<MapPoint>& points, const std::vector<Vec2>& observations,
                   const Pose& camera_from_world, const CameraIntrinsics& K, double huber_delta) {
  if (points.size() != observations.size()) throw DimensionMismatchError("points and observations differ in count");
  double cost = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 q = camera_from_world * points[i].world;
    if (!(q.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
    const Vec2 e = observations[i] - Vec2(K.fx * q.x() / q.z() + K.cx, K.fy * q.y() / q.z() + K.cy);
    cost += huber(e.norm(), huber_delta);
  }
  return cost;
}

PoseSolveReport solve_pose(const std::vector<MapPoint>& all_points, const std::vector<Vec2>& all_observations,
                           const Pose& initial, const CameraIntrinsics& K, const SolverOptions& options) {
  if (all_points.size() != all_observations.size())
    throw DimensionMismatchError("points and observations differ in count");

  PoseSolveReport report;
  std::vector<MapPoint> points;
  std::vector<Vec2> observations;
  for (std::size_t i = 0; i < all_points.size(); ++i) {
    if ((initial * all_points[i].world).z() > kMinDepth) {
      points.push_back(all_points[i]);
      observations.push_back(all_observations[i]);
    } else {
      ++report.dropped;
    }
  }
  if (points.size() < 6) throw DegenerateGeometryError("pose solve needs at least 6 correspondences");

  Pose pose = initial;
  double cost = robust_cost(points, observations, pose, K, options.huber_delta);
  report.initial_cost = cost;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 q = pose * points[i].world;
      const double iz = 1.0 / q.z();
      const Vec2 e = observations[i] - Vec2(K.fx * q.x() * iz + K.cx, K.fy * q.y() * iz + K.cy);
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << K.fx * iz, 0.0, -K.fx * q.x() * iz * iz, 0.0, K.fy * iz, -K.fy * q.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dq;
      dq.leftCols<3>().setIdentity();
      dq.rightCols<3>() << 0.0, q.z(), -q.y(), -q.z(), 0.0, q.x(), q.y(), -q.x(), 0.0;
      const Eigen::Matrix<double, 2, 6> J = -dpi * dq;  // de/dxi
      const double r = e.norm();
      const double w = r <= options.huber_delta ? 1.0 : options.huber_delta / r;
      H.noalias() += w * J.transpose() * J;
      g.noalias() += w * J.transpose() * e;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(H);
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmax > 0.0) || eig.eigenvalues().minCoeff() <= 1e-10 * lmax)
      throw DegenerateGeometryError("singular normal equations");
    Vec6 step = -H.ldlt().solve(g);

    if (step.norm() < options.step_tolerance) {
      report.converged = true;
      break;
    }
    bool accepted = false;
    for (int k = 0; k <= options.max_halvings; ++k) {
      const Pose candidate = Pose::from_tangent(step) * pose;
      const double c = robust_cost(points, observations, candidate, K, options.huber_delta);
      if (c <= cost) {
        pose = candidate;
        cost = c;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    report.iterations = iter + 1;
    if (!accepted) {
      // no descent left along the GN direction: at a minimum up to round-off
      report.converged = true;
      break;
    }
    if (step.norm() < options.step_tolerance) {
      report.converged = true;
      break;
    }
  }
  report.pose = pose;
  report.final_cost = cost;
  return report;
}

}  // namespace adaptvo

#include "adaptvo/metrics.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace adaptvo {

namespace {

bool usable(double p, double g, double cap) {
  return p > 0.0 && g > 0.0 && g <= cap && std::isfinite(p) && std::isfinite(g);
}

}  // namespace

double align_scale(const DepthMap& pred, const DepthMap& gt, double cap) {
  if (!pred.same_shape(gt)) throw DimensionMismatchError("depth maps differ in size");
  double sp = 0.0;
  double sg = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!usable(pred[i], gt[i], cap)) continue;
    sp += pred[i];
    sg += gt[i];
    ++n;
  }
  if (n == 0) throw EmptyInputError("no pixels valid in both depth maps");
  return sg / sp;
}

DepthMap scale_depth(const DepthMap& depth, double s) {
  DepthMap out = depth;
  for (auto& d : out.values()) d *= s;
  return out;
}

DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, double cap) {
  if (!pred.same_shape(gt)) throw DimensionMismatchError("depth maps differ in size");
  DepthMetrics m;
  double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double g = gt[i];
    if (!usable(p, g, cap)) continue;
    const double diff = p - g;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    const double ratio = std::max(p / g, g / p);
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
    ++m.count;
  }
  if (m.count == 0) throw EmptyInputError("no pixels valid in both depth maps");
  const auto n = static_cast<double>(m.count);
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.rmse = std::sqrt(sq / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  return m;
}

DepthMetrics aligned_depth_metrics(const DepthMap& pred, const DepthMap& gt, double cap) {
  return depth_metrics(scale_depth(pred, align_scale(pred, gt, cap)), gt, cap);
}

Similarity align_similarity(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  if (est.size() != gt.size()) throw DimensionMismatchError("trajectories differ in length");
  if (est.size() < 2) throw EmptyInputError("similarity alignment needs at least two positions");
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(est.size()));
  Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(gt.size()));
  for (std::size_t i = 0; i < est.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = est[i];
    dst.col(static_cast<Eigen::Index>(i)) = gt[i];
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
  Similarity sim;
  sim.scale = T.block<3, 1>(0, 0).norm();
  sim.rotation = T.block<3, 3>(0, 0) / sim.scale;
  sim.translation = T.block<3, 1>(0, 3);
  return sim;
}

TrajectoryMetrics trajectory_metrics(const Trajectory& est, const Trajectory& gt, const std::vector<double>& lengths) {
  std::map<double, const Pose*> by_stamp;
  for (const auto& s : est) by_stamp[s.timestamp] = &s.pose;
  std::vector<Pose> e;
  std::vector<Pose> g;
  for (const auto& s : gt) {
    const auto it = by_stamp.find(s.timestamp);
    if (it == by_stamp.end()) continue;
    e.push_back(*it->second);
    g.push_back(s.pose);
  }
  if (e.size() < 2) throw EmptyInputError("fewer than two matched timestamps");

  std::vector<Vec3> pe, pg;
  for (std::size_t i = 0; i < e.size(); ++i) {
    pe.push_back(e[i].translation());
    pg.push_back(g[i].translation());
  }
  const Similarity sim = align_similarity(pe, pg);

  TrajectoryMetrics m;
  double sq = 0.0;
  std::vector<Pose> aligned;
  aligned.reserve(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const Vec3 p = sim.apply(pe[i]);
    sq += (p - pg[i]).squaredNorm();
    aligned.emplace_back(sim.rotation * e[i].rotation(), p);
  }
  m.ate_rmse = std::sqrt(sq / static_cast<double>(e.size()));

  std::vector<double> dist(g.size(), 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) dist[i] = dist[i - 1] + (pg[i] - pg[i - 1]).norm();

  double t_sum = 0.0;
  double r_sum = 0.0;
  for (std::size_t first = 0; first < g.size(); ++first) {
    for (const double len : lengths) {
      std::size_t last = first;
      while (last < g.size() && dist[last] <= dist[first] + len) ++last;
      if (last >= g.size()) continue;
      const Pose delta_gt = g[first].inverse() * g[last];
      const Pose delta_est = aligned[first].inverse() * aligned[last];
      const Pose err = delta_est.inverse() * delta_gt;
      t_sum += err.translation().norm() / len;
      r_sum += rotation_angle(err.rotation()) / len;
      ++m.segments;
    }
  }
  if (m.segments > 0) {
    m.t_rel = 100.0 * t_sum / static_cast<double>(m.segments);
    m.r_rel = 100.0 * (180.0 / std::numbers::pi) * r_sum / static_cast<double>(m.segments);
  }
  return m;
}

}  // namespace adaptvo

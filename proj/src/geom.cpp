#include "adaptvo/geom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adaptvo {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("principal point must lie inside the image");
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

bool CameraIntrinsics::contains(const Vec2& p) const noexcept {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1.0 && p.y() <= height - 1.0;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {
  constexpr double kTol = 1e-9;
  if (!rotation.allFinite() || !translation.allFinite()) throw std::invalid_argument("pose is not finite");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > kTol ||
      std::abs(rotation.determinant() - 1.0) > kTol)
    throw std::invalid_argument("pose rotation is not a proper rotation");
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& translation) {
  return {q.normalized().toRotationMatrix(), translation};
}

Pose Pose::from_tangent(const Vec6& xi) {
  Pose p;
  p.rotation_ = so3_exp(xi.tail<3>());
  p.translation_ = xi.head<3>();
  return p;
}

Eigen::Quaterniond Pose::quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

Pose Pose::inverse() const {
  Pose p;
  p.rotation_ = rotation_.transpose();
  p.translation_ = -(p.rotation_ * translation_);
  return p;
}

Pose Pose::normalized() const {
  Pose p;
  p.rotation_ = Eigen::Quaterniond(rotation_).normalized().toRotationMatrix();
  p.translation_ = translation_;
  return p;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose p;
  p.rotation_ = rotation_ * rhs.rotation_;
  p.translation_ = rotation_ * rhs.translation_ + translation_;
  return p;
}

Pose Pose::scaled(double s) const {
  Pose p = *this;
  p.translation_ *= s;
  return p;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  Mat3 hat;
  hat << 0.0, -omega.z(), omega.y(), omega.z(), 0.0, -omega.x(), -omega.y(), omega.x(), 0.0;
  if (theta < 1e-8) {
    // second-order series keeps R orthonormal to ~1e-24 here
    return Mat3::Identity() + hat + 0.5 * hat * hat;
  }
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

double rotation_angle(const Mat3& rotation) {
  const double c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos is ill-conditioned near 0; use the skew part for small angles
  const Vec3 s(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0), rotation(1, 0) - rotation(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

Vec2 project(const Vec3& p_cam, const CameraIntrinsics& K) {
  if (!(p_cam.z() > 0.0)) throw BehindCameraError("point is behind the camera");
  return {K.fx * p_cam.x() / p_cam.z() + K.cx, K.fy * p_cam.y() / p_cam.z() + K.cy};
}

Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& K) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw InvalidDepthError("depth must be positive and finite");
  return {(pixel.x() - K.cx) / K.fx * depth, (pixel.y() - K.cy) / K.fy * depth, depth};
}

WarpedPixel warp_pixel(const Vec2& pixel, double depth, const Pose& T, const CameraIntrinsics& K) {
  const Vec3 q = T * backproject(pixel, depth, K);
  WarpedPixel out;
  out.pixel = project(q, K);
  out.depth = q.z();
  out.in_bounds = K.contains(out.pixel);
  return out;
}

std::optional<BilinearStencil> bilinear_stencil(const Vec2& p, int width, int height) {
  if (!(p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1.0 && p.y() <= height - 1.0)) return std::nullopt;
  BilinearStencil s;
  s.u0 = static_cast<int>(std::floor(p.x()));
  s.v0 = static_cast<int>(std::floor(p.y()));
  if (s.u0 > width - 2) s.u0 = std::max(0, width - 2);
  if (s.v0 > height - 2) s.v0 = std::max(0, height - 2);
  s.fu = p.x() - s.u0;
  s.fv = p.y() - s.v0;
  return s;
}

std::optional<double> sample_intensity(const Image& image, const Vec2& p) {
  const auto s = bilinear_stencil(p, image.width(), image.height());
  if (!s) return std::nullopt;
  return bilinear_eval(image, *s).value;
}

std::optional<double> sample_depth(const DepthMap& depth, const Vec2& p) {
  const auto s = bilinear_stencil(p, depth.width(), depth.height());
  if (!s) return std::nullopt;
  const int u1 = std::min(s->u0 + 1, depth.width() - 1);
  const int v1 = std::min(s->v0 + 1, depth.height() - 1);
  const double w[4] = {s->w00(), s->w10(), s->w01(), s->w11()};
  const double d[4] = {depth(s->u0, s->v0), depth(u1, s->v0), depth(s->u0, v1), depth(u1, v1)};
  double value = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (w[i] == 0.0) continue;
    if (!(d[i] > 0.0)) return std::nullopt;
    value += w[i] * d[i];
  }
  return value;
}

std::optional<std::pair<int, int>> nearest_pixel(const Vec2& p, int width, int height) {
  const double u = std::round(p.x());
  const double v = std::round(p.y());
  if (!(u >= 0.0 && v >= 0.0 && u < width && v < height)) return std::nullopt;
  return std::pair{static_cast<int>(u), static_cast<int>(v)};
}

}  // namespace adaptvo

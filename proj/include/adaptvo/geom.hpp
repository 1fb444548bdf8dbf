#pragma once

// Camera model, rigid transforms, rasters and the projection / warping
// primitives shared by every other module.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "adaptvo/error.hpp"

namespace adaptvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Row-major 2-D raster. The tag keeps depth, intensity, mask and label
/// rasters from being mixed up.
template <typename T, typename Tag>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        values_(static_cast<std::size_t>(checked(width)) * static_cast<std::size_t>(checked(height)), fill) {}

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

  [[nodiscard]] bool contains(int u, int v) const noexcept {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }
  [[nodiscard]] std::size_t index(int u, int v) const noexcept {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(u);
  }

  T& operator()(int u, int v) noexcept { return values_[index(u, v)]; }
  const T& operator()(int u, int v) const noexcept { return values_[index(u, v)]; }
  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  [[nodiscard]] std::span<T> values() noexcept { return values_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return values_; }

  template <typename R>
  [[nodiscard]] bool same_shape(const R& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static int checked(int n) {
    if (n < 0) throw DimensionMismatchError("raster dimensions must be non-negative");
    return n;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

/// Depth in meters, 0.0 marks an invalid pixel.
using DepthMap = Raster<double, struct DepthTag>;
/// Intensities normalized to [0, 1].
using Image = Raster<double, struct IntensityTag>;
/// Keep-weights in [0, 1]; 1 keeps a pixel in the loss.
using MaskMap = Raster<double, struct MaskTag>;
/// Generic per-pixel scalar (loss maps, SSIM maps).
using ScalarMap = Raster<double, struct ScalarTag>;
using LabelRaster = Raster<std::uint16_t, struct LabelTag>;
using ValidityMap = Raster<std::uint8_t, struct ValidityTag>;

/// Semantic labels (0 = unlabeled) with an optional instance-id raster.
struct SegMap {
  LabelRaster labels;
  std::optional<LabelRaster> instances;

  [[nodiscard]] int width() const noexcept { return labels.width(); }
  [[nodiscard]] int height() const noexcept { return labels.height(); }

  friend bool operator==(const SegMap&, const SegMap&) = default;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
  [[nodiscard]] Mat3 matrix() const;
  [[nodiscard]] bool contains(const Vec2& pixel) const noexcept;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid transform x' = R x + t.
class Pose {
 public:
  Pose() = default;
  /// Throws std::invalid_argument unless R is a proper rotation within 1e-9.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& translation);
  /// Left-multiplicative retraction: returns (exp(omega), rho) for xi = (rho, omega).
  static Pose from_tangent(const Vec6& xi);

  [[nodiscard]] const Mat3& rotation() const noexcept { return rotation_; }
  [[nodiscard]] const Vec3& translation() const noexcept { return translation_; }
  [[nodiscard]] Eigen::Quaterniond quaternion() const;

  [[nodiscard]] Pose inverse() const;
  [[nodiscard]] Pose operator*(const Pose& rhs) const;
  [[nodiscard]] Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Same rotation, translation multiplied by `s`.
  [[nodiscard]] Pose scaled(double s) const;
  /// Rotation re-projected onto SO(3) through a unit quaternion; long chains
  /// of products otherwise drift off it by about 1e-14 per step.
  [[nodiscard]] Pose normalized() const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

Mat3 so3_exp(const Vec3& omega);
/// Rotation angle of R in radians.
double rotation_angle(const Mat3& rotation);

/// Pinhole projection; throws BehindCameraError for z <= 0.
Vec2 project(const Vec3& p_cam, const CameraIntrinsics& K);
/// Throws InvalidDepthError for non-positive or non-finite depth.
Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& K);

struct WarpedPixel {
  Vec2 pixel;
  double depth = 0.0;
  bool in_bounds = false;
};

/// project(T * backproject(pixel, depth)). Out-of-image results are reported
/// through `in_bounds`, never clamped. Throws BehindCameraError when the
/// transformed depth is not positive.
WarpedPixel warp_pixel(const Vec2& pixel, double depth, const Pose& T, const CameraIntrinsics& K);

/// Four-tap bilinear stencil at a continuous position; exists only when the
/// position lies inside [0, w-1] x [0, h-1].
struct BilinearStencil {
  int u0 = 0;
  int v0 = 0;
  double fu = 0.0;  // weight of column u0 + 1
  double fv = 0.0;  // weight of row v0 + 1

  [[nodiscard]] double w00() const noexcept { return (1.0 - fu) * (1.0 - fv); }
  [[nodiscard]] double w10() const noexcept { return fu * (1.0 - fv); }
  [[nodiscard]] double w01() const noexcept { return (1.0 - fu) * fv; }
  [[nodiscard]] double w11() const noexcept { return fu * fv; }
};

std::optional<BilinearStencil> bilinear_stencil(const Vec2& p, int width, int height);

/// Value and gradient of bilinear interpolation with respect to (u, v).
struct BilinearValue {
  double value = 0.0;
  double d_du = 0.0;
  double d_dv = 0.0;
};

template <typename R>
BilinearValue bilinear_eval(const R& raster, const BilinearStencil& s) {
  const int u1 = s.u0 + 1 < raster.width() ? s.u0 + 1 : s.u0;
  const int v1 = s.v0 + 1 < raster.height() ? s.v0 + 1 : s.v0;
  const double a = raster(s.u0, s.v0);
  const double b = raster(u1, s.v0);
  const double c = raster(s.u0, v1);
  const double d = raster(u1, v1);
  BilinearValue out;
  out.value = s.w00() * a + s.w10() * b + s.w01() * c + s.w11() * d;
  out.d_du = (1.0 - s.fv) * (b - a) + s.fv * (d - c);
  out.d_dv = (1.0 - s.fu) * (c - a) + s.fu * (d - b);
  return out;
}

/// Bilinear intensity sample; nullopt outside the image.
std::optional<double> sample_intensity(const Image& image, const Vec2& p);
/// Bilinear depth sample; nullopt outside the image or when a tap with
/// non-zero weight is invalid.
std::optional<double> sample_depth(const DepthMap& depth, const Vec2& p);
/// Nearest integer pixel (round half away from zero); nullopt outside.
std::optional<std::pair<int, int>> nearest_pixel(const Vec2& p, int width, int height);

}  // namespace adaptvo

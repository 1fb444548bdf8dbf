#include "adaptvo/sparsedepth.hpp"

#include <cmath>
#include <unordered_set>

namespace adaptvo {

namespace {
constexpr double kMinRayAngle = 1e-6;
}

Vec3 ray_midpoint(const Ray& first, const Ray& second) {
  const Vec3& d1 = first.direction;
  const Vec3& d2 = second.direction;
  const double n1 = d1.norm();
  const double n2 = d2.norm();
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw DegenerateGeometryError("ray direction is zero");
  const double sin_angle = d1.cross(d2).norm() / (n1 * n2);
  if (!(sin_angle > std::sin(kMinRayAngle))) throw DegenerateGeometryError("rays are parallel");

  // minimize |o1 + s d1 - (o2 + t d2)|^2
  const Vec3 w0 = first.origin - second.origin;
  const double a = d1.dot(d1);
  const double b = d1.dot(d2);
  const double c = d2.dot(d2);
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double denom = a * c - b * b;
  const double s = (b * e - c * d) / denom;
  const double t = (a * e - b * d) / denom;
  return 0.5 * ((first.origin + s * d1) + (second.origin + t * d2));
}

Vec3 triangulate_two_view(const Correspondence& match, const Pose& b_from_a, const CameraIntrinsics& K) {
  if (!(b_from_a.translation().norm() > 0.0)) throw DegenerateGeometryError("zero baseline");
  const Vec3 ray_a = backproject(match.pixel_a, 1.0, K);
  const Vec3 ray_b = backproject(match.pixel_b, 1.0, K);
  const Ray in_b_from_a{b_from_a.translation(), b_from_a.rotation() * ray_a};
  const Ray in_b{Vec3::Zero(), ray_b};
  const Vec3 point = ray_midpoint(in_b_from_a, in_b);
  const Vec3 in_a = b_from_a.inverse() * point;
  if (!(point.z() > 0.0) || !(in_a.z() > 0.0)) throw CheiralityError("triangulated point is behind a camera");
  return point;
}

SparseDepthBuild build_sparse_depth(const CorrespondenceSet& matches, const Pose& b_from_a,
                                    const CameraIntrinsics& K) {
  if (matches.matches.empty()) throw EmptyInputError("no correspondences to triangulate");
  SparseDepthBuild out;
  out.sparse.frame_id = matches.frame_b;
  std::unordered_set<long long> seen;
  for (const auto& m : matches.matches) {
    const auto px = nearest_pixel(m.pixel_b, K.width, K.height);
    if (!px) {
      ++out.dropped;
      continue;
    }
    Vec3 point;
    try {
      point = triangulate_two_view(m, b_from_a, K);
    } catch (const DegenerateGeometryError&) {
      ++out.dropped;
      continue;
    } catch (const CheiralityError&) {
      ++out.dropped;
      continue;
    }
    const long long key = static_cast<long long>(px->second) * K.width + px->first;
    if (!seen.insert(key).second) {
      ++out.dropped;
      continue;
    }
    out.sparse.samples.push_back({px->first, px->second, point.z()});
  }
  if (out.sparse.samples.empty()) throw EmptyInputError("no correspondence survived triangulation");
  return out;
}

}  // namespace adaptvo

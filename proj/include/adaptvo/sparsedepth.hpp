#pragma once

// Two-view triangulation of matched pixels into a sparse depth map.

#include <cstddef>
#include <vector>

#include "adaptvo/geom.hpp"

namespace adaptvo {

struct Correspondence {
  Vec2 pixel_a;
  Vec2 pixel_b;
  double weight = 1.0;
};

/// Matches between frame `frame_a` (earlier) and `frame_b`.
struct CorrespondenceSet {
  int frame_a = 0;
  int frame_b = 0;
  std::vector<Correspondence> matches;
};

struct DepthSample {
  int u = 0;
  int v = 0;
  double depth = 0.0;

  friend bool operator==(const DepthSample&, const DepthSample&) = default;
};

struct SparseDepth {
  int frame_id = 0;
  std::vector<DepthSample> samples;

  friend bool operator==(const SparseDepth&, const SparseDepth&) = default;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;
};

/// Midpoint of the common perpendicular of two rays, i.e. the minimizer of
/// the summed squared distances to both lines. Throws
/// DegenerateGeometryError when the rays are parallel (angle <= 1e-6 rad).
Vec3 ray_midpoint(const Ray& first, const Ray& second);

/// Triangulates one match. `b_from_a` maps frame-a camera coordinates into
/// frame b; the returned point is expressed in frame-b camera coordinates.
/// Throws DegenerateGeometryError (parallel rays, zero baseline) or
/// CheiralityError (point behind either camera).
Vec3 triangulate_two_view(const Correspondence& match, const Pose& b_from_a, const CameraIntrinsics& K);

struct SparseDepthBuild {
  SparseDepth sparse;
  std::size_t dropped = 0;
};

/// One sample per successfully triangulated match, located at the rounded
/// frame-b pixel. Failed, out-of-image and duplicate-pixel matches are
/// dropped and counted. Throws EmptyInputError when nothing survives.
SparseDepthBuild build_sparse_depth(const CorrespondenceSet& matches, const Pose& b_from_a,
                                    const CameraIntrinsics& K);

}  // namespace adaptvo

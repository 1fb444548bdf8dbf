#pragma once

// Dynamic consistency enhancement: self-discovered weights, the semantic
// consistency mask, the geometric rank mask and their product.

#include <cstdint>
#include <vector>

#include "adaptvo/geom.hpp"

namespace adaptvo {

/// Sorted, duplicate-free linear pixel indices.
using PixelSet = std::vector<std::int32_t>;

struct ObjectRegion {
  int frame_id = 0;
  int region_id = 0;
  std::uint16_t category = 0;
  bool from_instances = false;  // region came from an instance raster
  PixelSet pixels;
};

/// One region per non-zero instance id when instances are present (category
/// = most frequent label inside it), otherwise one region per 4-connected
/// component of each non-zero category.
std::vector<ObjectRegion> extract_regions(const SegMap& seg, int frame_id);

/// Depths of frame t re-expressed at the matching location of frame t-1.
struct ProjectedDepths {
  DepthMap projected;     // depth of T * backproject(p, D_t(p))
  DepthMap interpolated;  // bilinear D_{t-1} at the warped location
  ValidityMap valid;
};

/// `prev_from_cur` maps frame-t camera coordinates into frame t-1.
ProjectedDepths project_depths(const DepthMap& depth_cur, const DepthMap& depth_prev, const Pose& prev_from_cur,
                               const CameraIntrinsics& K);

struct SelfDiscoveredWeights {
  MaskMap weights;  // 0 where invalid
  ValidityMap valid;
};

/// W_s = 1 - |a - b| / (a + b) per pixel where both depths are valid.
SelfDiscoveredWeights compute_ws(const DepthMap& depth_prev, const DepthMap& depth_proj);

struct WarpedRegion {
  PixelSet pixels;
  std::size_t skipped_invalid = 0;  // pixels without a valid depth
};

/// Rounded warped pixels of `region` that land inside the image. Pixels
/// behind the camera or outside the image are dropped silently.
WarpedRegion warp_region(const ObjectRegion& region, const DepthMap& depth_cur, const Pose& prev_from_cur,
                         const CameraIntrinsics& K);

double region_iou(const PixelSet& a, const PixelSet& b);

inline constexpr double kSemanticIouThreshold = 0.85;
inline constexpr double kGeometricRankFraction = 0.20;

/// Region pixels are kept (1) when the best IoU between the warped region and
/// a previous-frame region reaches `tau_s`, and excluded (0) otherwise,
/// including regions with no candidate. Unlabeled pixels stay 1.
MaskMap compute_msc(const std::vector<ObjectRegion>& regions_cur, const std::vector<ObjectRegion>& regions_prev,
                    const DepthMap& depth_cur, const Pose& prev_from_cur, const CameraIntrinsics& K,
                    double tau_s = kSemanticIouThreshold);

/// Zeroes exactly floor(fraction * n_valid) valid pixels with the lowest
/// weights (ties: earlier raster index first). Invalid pixels are 0.
MaskMap compute_mgc(const MaskMap& weights, const ValidityMap& valid, double fraction = kGeometricRankFraction);
MaskMap compute_mgc(const MaskMap& weights, double fraction = kGeometricRankFraction);

/// Element-wise product.
MaskMap compose_mask(const MaskMap& semantic, const MaskMap& geometric);

}  // namespace adaptvo

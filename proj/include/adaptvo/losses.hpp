#pragma once

// Self-supervised objective for online learning: view synthesis, SSIM,
// photometric / geometry / smoothness / depth-consistency terms and the
// weighted total, with analytic gradients with respect to both depth maps.

#include <cstddef>

#include "adaptvo/geom.hpp"

namespace adaptvo {

struct SynthesizedView {
  Image image;  // 0 where invalid
  ValidityMap valid;
};

/// I'(p) = I_prev(warp(p, D_cur(p))) with bilinear sampling.
SynthesizedView synthesize_view(const Image& image_prev, const DepthMap& depth_cur, const Pose& prev_from_cur,
                                const CameraIntrinsics& K);

inline constexpr double kSsimC1 = 1e-4;  // (0.01 * 1)^2
inline constexpr double kSsimC2 = 9e-4;  // (0.03 * 1)^2

/// 3x3 block SSIM with reflected borders.
ScalarMap ssim(const Image& a, const Image& b);

/// (alpha/2)(1 - SSIM) + (1 - alpha)|a - b| per pixel.
ScalarMap photometric_loss(const Image& target, const Image& synthesized, double alpha = 0.85);

/// |a - b| / (a + b) where both are positive, 0 elsewhere.
ScalarMap geometry_loss(const DepthMap& interpolated, const DepthMap& projected);

/// Edge-aware smoothness of mean-normalized depth, forward differences over
/// pixels with u < w-1 and v < h-1.
double smoothness_loss(const DepthMap& depth, const Image& image);

/// |1/D - 1/D_d| where D_d > 0, 0 elsewhere.
ScalarMap depth_consistency_loss(const DepthMap& depth, const DepthMap& dense);

struct LossWeights {
  double alpha = 0.85;
  double lambda_s = 0.1;
  double lambda_g = 0.1;
  double lambda_d = 0.1;
  bool attach_ws = false;  // differentiate through W_s in the photometric term
};

struct LossBreakdown {
  double l_p = 0.0;  // W_s-weighted photometric mean
  double l_s = 0.0;
  double l_g = 0.0;  // M-weighted mean
  double l_d = 0.0;  // M-weighted mean
  double l_total = 0.0;
  std::size_t n_p = 0;
  std::size_t n_g = 0;
  std::size_t n_d = 0;
};

/// Combines per-pixel maps. Each mean divides by its own count: photometric
/// over `valid_p`, L_g over valid_g with M > 0, L_d over valid_d with M > 0.
LossBreakdown total_loss(const ScalarMap& l_p, const ValidityMap& valid_p, const ScalarMap& w_s, double l_s,
                         const ScalarMap& l_g, const ValidityMap& valid_g, const ScalarMap& l_d,
                         const ValidityMap& valid_d, const MaskMap& mask, const LossWeights& weights);

/// One frame pair (t-1, t); all maps live on frame-t pixels except the
/// previous image and depth.
struct PairView {
  const Image& image_prev;
  const Image& image_cur;
  const DepthMap& depth_prev;
  const DepthMap& depth_cur;
  const Pose& prev_from_cur;
  const DepthMap& dense;  // D_d for frame t, 0 = invalid
  const MaskMap& mask;    // M for frame t
  const ScalarMap* fixed_ws = nullptr;  // replaces the computed W_s when set
};

struct PairLoss {
  LossBreakdown breakdown;
  SynthesizedView view;
  ValidityMap valid_p;  // pixel and its 3x3 neighbourhood warp-valid
  ScalarMap l_p;
  ScalarMap l_g;
  ScalarMap w_s;
  ScalarMap l_d;
  DepthMap grad_cur;   // dL/dD_t, empty without gradients
  DepthMap grad_prev;  // dL/dD_{t-1}
};

PairLoss pair_loss(const PairView& pair, const CameraIntrinsics& K, const LossWeights& weights,
                   bool with_gradient = true);

}  // namespace adaptvo

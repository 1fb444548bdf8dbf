#include "adaptvo/dce.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace adaptvo {

std::vector<ObjectRegion> extract_regions(const SegMap& seg, int frame_id) {
  std::vector<ObjectRegion> regions;
  const int w = seg.width();
  const int h = seg.height();

  if (seg.instances) {
    if (!seg.instances->same_shape(seg.labels)) throw DimensionMismatchError("instance raster size mismatch");
    std::map<std::uint16_t, ObjectRegion> by_id;
    std::map<std::uint16_t, std::map<std::uint16_t, int>> votes;
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const std::uint16_t id = (*seg.instances)(u, v);
        const std::uint16_t label = seg.labels(u, v);
        if (id == 0 || label == 0) continue;
        auto& r = by_id[id];
        r.pixels.push_back(static_cast<std::int32_t>(seg.labels.index(u, v)));
        ++votes[id][label];
      }
    }
    for (auto& [id, r] : by_id) {
      r.frame_id = frame_id;
      r.region_id = id;
      r.from_instances = true;
      const auto& v = votes[id];
      r.category = std::max_element(v.begin(), v.end(), [](const auto& a, const auto& b) {
                     return a.second < b.second;
                   })->first;
      regions.push_back(std::move(r));
    }
    return regions;
  }

  std::vector<std::int32_t> component(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), -1);
  std::vector<std::int32_t> stack;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const auto seed = static_cast<std::int32_t>(seg.labels.index(u, v));
      const std::uint16_t label = seg.labels[static_cast<std::size_t>(seed)];
      if (label == 0 || component[static_cast<std::size_t>(seed)] >= 0) continue;
      ObjectRegion r;
      r.frame_id = frame_id;
      r.region_id = static_cast<int>(regions.size()) + 1;
      r.category = label;
      stack.assign(1, seed);
      component[static_cast<std::size_t>(seed)] = r.region_id;
      while (!stack.empty()) {
        const std::int32_t p = stack.back();
        stack.pop_back();
        r.pixels.push_back(p);
        const int pu = p % w;
        const int pv = p / w;
        const int nu[4] = {pu - 1, pu + 1, pu, pu};
        const int nv[4] = {pv, pv, pv - 1, pv + 1};
        for (int k = 0; k < 4; ++k) {
          if (!seg.labels.contains(nu[k], nv[k])) continue;
          const auto q = static_cast<std::int32_t>(seg.labels.index(nu[k], nv[k]));
          if (component[static_cast<std::size_t>(q)] >= 0 || seg.labels[static_cast<std::size_t>(q)] != label) continue;
          component[static_cast<std::size_t>(q)] = r.region_id;
          stack.push_back(q);
        }
      }
      std::sort(r.pixels.begin(), r.pixels.end());
      regions.push_back(std::move(r));
    }
  }
  return regions;
}

ProjectedDepths project_depths(const DepthMap& depth_cur, const DepthMap& depth_prev, const Pose& prev_from_cur,
                               const CameraIntrinsics& K) {
  if (!depth_cur.same_shape(depth_prev)) throw DimensionMismatchError("depth maps differ in size");
  const int w = depth_cur.width();
  const int h = depth_cur.height();
  ProjectedDepths out{DepthMap(w, h, 0.0), DepthMap(w, h, 0.0), ValidityMap(w, h, 0)};
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d = depth_cur(u, v);
      if (!(d > 0.0)) continue;
      const Vec3 q = prev_from_cur * backproject(Vec2(u, v), d, K);
      if (!(q.z() > 0.0)) continue;
      const Vec2 p = project(q, K);
      const auto sampled = sample_depth(depth_prev, p);
      if (!sampled) continue;
      out.projected(u, v) = q.z();
      out.interpolated(u, v) = *sampled;
      out.valid(u, v) = 1;
    }
  }
  return out;
}

SelfDiscoveredWeights compute_ws(const DepthMap& depth_prev, const DepthMap& depth_proj) {
  if (!depth_prev.same_shape(depth_proj)) throw DimensionMismatchError("depth maps differ in size");
  SelfDiscoveredWeights out{MaskMap(depth_prev.width(), depth_prev.height(), 0.0),
                            ValidityMap(depth_prev.width(), depth_prev.height(), 0)};
  for (std::size_t i = 0; i < depth_prev.size(); ++i) {
    const double a = depth_prev[i];
    const double b = depth_proj[i];
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) continue;
    out.weights[i] = 1.0 - std::abs(a - b) / (a + b);
    out.valid[i] = 1;
  }
  return out;
}

WarpedRegion warp_region(const ObjectRegion& region, const DepthMap& depth_cur, const Pose& prev_from_cur,
                         const CameraIntrinsics& K) {
  WarpedRegion out;
  const int w = depth_cur.width();
  out.pixels.reserve(region.pixels.size());
  for (const auto p : region.pixels) {
    const int u = p % w;
    const int v = p / w;
    const double d = depth_cur[static_cast<std::size_t>(p)];
    if (!(d > 0.0) || !std::isfinite(d)) {
      ++out.skipped_invalid;
      continue;
    }
    const Vec3 q = prev_from_cur * backproject(Vec2(u, v), d, K);
    if (!(q.z() > 0.0)) continue;
    const auto px = nearest_pixel(project(q, K), w, depth_cur.height());
    if (!px) continue;
    out.pixels.push_back(static_cast<std::int32_t>(px->second * w + px->first));
  }
  std::sort(out.pixels.begin(), out.pixels.end());
  out.pixels.erase(std::unique(out.pixels.begin(), out.pixels.end()), out.pixels.end());
  return out;
}

double region_iou(const PixelSet& a, const PixelSet& b) {
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MaskMap compute_msc(const std::vector<ObjectRegion>& regions_cur, const std::vector<ObjectRegion>& regions_prev,
                    const DepthMap& depth_cur, const Pose& prev_from_cur, const CameraIntrinsics& K, double tau_s) {
  if (!(tau_s > 0.0 && tau_s <= 1.0)) throw std::invalid_argument("tau_s must lie in (0, 1]");
  MaskMap mask(depth_cur.width(), depth_cur.height(), 1.0);
  for (const auto& region : regions_cur) {
    const WarpedRegion warped = warp_region(region, depth_cur, prev_from_cur, K);
    double best = -1.0;
    if (!warped.pixels.empty()) {
      for (const auto& candidate : regions_prev) {
        const bool category_only = !(region.from_instances && candidate.from_instances);
        if (category_only && candidate.category != region.category) continue;
        best = std::max(best, region_iou(warped.pixels, candidate.pixels));
      }
    }
    const double keep = best >= tau_s ? 1.0 : 0.0;
    for (const auto p : region.pixels) mask[static_cast<std::size_t>(p)] = keep;
  }
  return mask;
}

MaskMap compute_mgc(const MaskMap& weights, const ValidityMap& valid, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("fraction must lie in (0, 1)");
  if (!weights.same_shape(valid)) throw DimensionMismatchError("validity raster size mismatch");
  std::vector<std::size_t> order;
  order.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (valid[i] != 0) order.push_back(i);
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size())));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] < weights[b]; });

  MaskMap mask(weights.width(), weights.height(), 0.0);
  for (std::size_t k = count; k < order.size(); ++k) mask[order[k]] = 1.0;
  return mask;
}

MaskMap compute_mgc(const MaskMap& weights, double fraction) {
  return compute_mgc(weights, ValidityMap(weights.width(), weights.height(), 1), fraction);
}

MaskMap compose_mask(const MaskMap& semantic, const MaskMap& geometric) {
  if (!semantic.same_shape(geometric)) throw DimensionMismatchError("masks differ in size");
  MaskMap out(semantic.width(), semantic.height(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = semantic[i] * geometric[i];
  return out;
}

}  // namespace adaptvo

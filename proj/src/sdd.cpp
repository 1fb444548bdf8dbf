#include "adaptvo/sdd.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace adaptvo {

CellIndex cell_of(int u, int v, int width, int height, const GridSpec& grid) {
  if (grid.divisions < 1) throw std::invalid_argument("grid divisions must be >= 1");
  if (width < grid.divisions || height < grid.divisions)
    throw std::invalid_argument("image is smaller than the grid");
  if (u < 0 || v < 0 || u >= width || v >= height) throw OutOfBoundsError("pixel outside the image");
  const int cw = width / grid.divisions;
  const int ch = height / grid.divisions;
  return {std::min(u / cw, grid.divisions - 1), std::min(v / ch, grid.divisions - 1)};
}

// ---------------------------------------------------------------------------
// KdTree2

namespace {

struct Candidate {
  double d2;
  int v;
  int u;
  std::uint32_t id;
};

bool closer(const Candidate& a, const Candidate& b) {
  return std::tie(a.d2, a.v, a.u) < std::tie(b.d2, b.v, b.u);
}

}  // namespace

KdTree2::KdTree2(std::vector<Point> points) : points_(std::move(points)) {
  nodes_.reserve(points_.size());
  root_ = build(0, points_.size(), 0);
}

std::int32_t KdTree2::build(std::size_t begin, std::size_t end, int depth) {
  if (begin >= end) return -1;
  const auto axis = static_cast<std::uint8_t>(depth % 2);
  const std::size_t mid = begin + (end - begin) / 2;
  auto key = [axis](const Point& p) { return axis == 0 ? std::tie(p.u, p.v) : std::tie(p.v, p.u); };
  std::nth_element(points_.begin() + static_cast<std::ptrdiff_t>(begin),
                   points_.begin() + static_cast<std::ptrdiff_t>(mid),
                   points_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](const Point& a, const Point& b) { return key(a) < key(b); });
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({static_cast<std::uint32_t>(mid), -1, -1, axis});
  const std::int32_t left = build(begin, mid, depth + 1);
  const std::int32_t right = build(mid + 1, end, depth + 1);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

std::vector<std::uint32_t> KdTree2::nearest(double qu, double qv, std::size_t k) const {
  std::vector<Candidate> best;  // sorted, at most k entries
  if (k == 0 || root_ < 0) return {};
  best.reserve(k + 1);

  auto visit = [&](auto&& self, std::int32_t node_index) -> void {
    if (node_index < 0) return;
    const Node& node = nodes_[static_cast<std::size_t>(node_index)];
    const Point& p = points_[node.point];
    const double du = p.u - qu;
    const double dv = p.v - qv;
    const Candidate c{du * du + dv * dv, p.v, p.u, p.id};
    if (best.size() < k || closer(c, best.back())) {
      best.insert(std::upper_bound(best.begin(), best.end(), c, closer), c);
      if (best.size() > k) best.pop_back();
    }
    const double diff = node.axis == 0 ? qu - p.u : qv - p.v;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    // ties at equal distance must still be examined
    if (best.size() < k || diff * diff <= best.back().d2) self(self, far);
  };
  visit(visit, root_);

  std::vector<std::uint32_t> ids;
  ids.reserve(best.size());
  for (const auto& c : best) ids.push_back(c.id);
  return ids;
}

// ---------------------------------------------------------------------------
// densify

namespace {

struct RegionStats {
  double sample_sum = 0.0;
  int sample_count = 0;
  double u_sum = 0.0;
  double v_sum = 0.0;
  int pixel_count = 0;
  double value = 0.0;
};

std::uint64_t region_key(const CellIndex& cell, int divisions, std::uint16_t label) {
  return (static_cast<std::uint64_t>(cell.cy * divisions + cell.cx) << 16) | label;
}

}  // namespace

DepthMap densify(const SparseDepth& sparse, const SegMap& seg, const GridSpec& grid, const MaskMap* dynamic_mask) {
  if (sparse.samples.empty()) throw EmptyInputError("sparse depth is empty");
  const int width = seg.width();
  const int height = seg.height();
  if (seg.labels.empty()) throw DimensionMismatchError("segmentation is empty");
  if (dynamic_mask != nullptr && !dynamic_mask->same_shape(seg.labels))
    throw DimensionMismatchError("dynamic mask does not match the segmentation");
  // validates the grid against the image size
  (void)cell_of(0, 0, width, height, grid);

  auto usable = [&](int u, int v) {
    return seg.labels(u, v) != 0 && (dynamic_mask == nullptr || (*dynamic_mask)(u, v) != 0.0);
  };

  std::vector<DepthSample> samples;
  samples.reserve(sparse.samples.size());
  for (const auto& s : sparse.samples) {
    if (!seg.labels.contains(s.u, s.v)) throw OutOfBoundsError("sparse sample outside the image");
    if (!(s.depth > 0.0)) throw InvalidDepthError("sparse sample depth must be positive");
    if (usable(s.u, s.v)) samples.push_back(s);
  }
  std::sort(samples.begin(), samples.end(),
            [](const DepthSample& a, const DepthSample& b) { return std::tie(a.v, a.u, a.depth) < std::tie(b.v, b.u, b.depth); });

  std::unordered_map<std::uint64_t, RegionStats> regions;
  std::unordered_map<std::uint16_t, std::vector<KdTree2::Point>> by_category;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::uint16_t label = seg.labels(s.u, s.v);
    auto& r = regions[region_key(cell_of(s.u, s.v, width, height, grid), grid.divisions, label)];
    r.sample_sum += s.depth;
    ++r.sample_count;
    by_category[label].push_back({s.u, s.v, static_cast<std::uint32_t>(i)});
  }

  std::vector<std::uint64_t> pixel_key(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      if (!usable(u, v)) continue;
      const std::uint16_t label = seg.labels(u, v);
      if (!by_category.contains(label)) continue;
      const std::uint64_t key = region_key(cell_of(u, v, width, height, grid), grid.divisions, label);
      pixel_key[seg.labels.index(u, v)] = key + 1;  // 0 reserved for "no region"
      auto& r = regions[key];
      r.u_sum += u;
      r.v_sum += v;
      ++r.pixel_count;
    }
  }

  std::unordered_map<std::uint16_t, KdTree2> trees;
  for (auto& [label, points] : by_category) trees.emplace(label, KdTree2(std::move(points)));

  for (auto& [key, r] : regions) {
    if (r.pixel_count == 0) continue;
    if (r.sample_count > 0) {
      r.value = r.sample_sum / r.sample_count;
      continue;
    }
    const auto label = static_cast<std::uint16_t>(key & 0xffffu);
    const double qu = r.u_sum / r.pixel_count;
    const double qv = r.v_sum / r.pixel_count;
    const auto ids = trees.at(label).nearest(qu, qv, kFillNeighbours);
    double sum = 0.0;
    for (const auto id : ids) sum += samples[id].depth;
    r.value = sum / static_cast<double>(ids.size());
  }

  DepthMap dense(width, height, 0.0);
  for (std::size_t i = 0; i < pixel_key.size(); ++i) {
    if (pixel_key[i] != 0) dense[i] = regions.at(pixel_key[i] - 1).value;
  }
  return dense;
}

}  // namespace adaptvo

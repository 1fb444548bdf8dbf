#pragma once

// Sparse depth densification: grid/category propagation of triangulated
// samples into a dense pseudo ground-truth depth map.

#include <cstdint>
#include <vector>

#include "adaptvo/geom.hpp"
#include "adaptvo/sparsedepth.hpp"

namespace adaptvo {

struct GridSpec {
  int divisions = 20;  // cells per axis

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct CellIndex {
  int cx = 0;
  int cy = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Floor division by floor(size / d); the last row and column of cells
/// absorb the remainder. Throws OutOfBoundsError for pixels outside the
/// image and std::invalid_argument when the image is smaller than the grid.
CellIndex cell_of(int u, int v, int width, int height, const GridSpec& grid);

/// Static 2-D k-d tree over integer sample pixels. Neighbours are ordered by
/// (squared distance, v, u), so results match an exhaustive sort exactly.
class KdTree2 {
 public:
  struct Point {
    int u = 0;
    int v = 0;
    std::uint32_t id = 0;
  };

  KdTree2() = default;
  explicit KdTree2(std::vector<Point> points);

  /// Ids of the min(k, size) nearest points to (qu, qv), nearest first.
  [[nodiscard]] std::vector<std::uint32_t> nearest(double qu, double qv, std::size_t k) const;
  [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::uint32_t point = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint8_t axis = 0;
  };

  std::int32_t build(std::size_t begin, std::size_t end, int depth);

  std::vector<Point> points_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

inline constexpr std::size_t kFillNeighbours = 5;

/// Dense pseudo depth. Pixels of a (cell, category) pair that holds samples
/// get the mean of those samples; other pairs get the mean of the (up to)
/// five nearest same-category samples to the pair's pixel centroid.
/// Unlabeled pixels, categories without any sample and pixels where
/// `dynamic_mask` is 0 stay invalid (0.0). Samples on such pixels are
/// ignored. Throws EmptyInputError or DimensionMismatchError.
DepthMap densify(const SparseDepth& sparse, const SegMap& seg, const GridSpec& grid,
                 const MaskMap* dynamic_mask = nullptr);

}  // namespace adaptvo

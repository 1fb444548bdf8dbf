#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "adaptvo/oracle.hpp"
#include "adaptvo/sdd.hpp"

using namespace adaptvo;

namespace {

SegMap uniform_seg(int w, int h, std::uint16_t label) {
  SegMap s;
  s.labels = LabelRaster(w, h, label);
  return s;
}

}  // namespace

TEST(CellOf, Examples) {
  const GridSpec g;
  EXPECT_EQ(cell_of(0, 0, 64, 48, g), (CellIndex{0, 0}));
  EXPECT_EQ(cell_of(99, 99, 100, 100, g), (CellIndex{19, 19}));
  EXPECT_EQ(cell_of(102, 102, 103, 103, g), (CellIndex{19, 19}));
  // 103 / 20 -> 5 px cells, the last one absorbs pixels 95..102
  EXPECT_EQ(cell_of(95, 0, 103, 103, g), (CellIndex{19, 0}));
  EXPECT_EQ(cell_of(94, 0, 103, 103, g), (CellIndex{18, 0}));
}

TEST(CellOf, Errors) {
  const GridSpec g;
  EXPECT_THROW(cell_of(100, 0, 100, 100, g), OutOfBoundsError);
  EXPECT_THROW(cell_of(-1, 0, 100, 100, g), OutOfBoundsError);
  EXPECT_THROW(cell_of(0, 0, 10, 10, g), std::invalid_argument);
}

TEST(CellOf, TilesImageExactly) {
  const GridSpec g;
  for (int w : {20, 47, 64, 103}) {
    std::vector<int> count(400, 0);
    for (int v = 0; v < w; ++v)
      for (int u = 0; u < w; ++u) {
        const auto c = cell_of(u, v, w, w, g);
        ASSERT_GE(c.cx, 0);
        ASSERT_LT(c.cx, 20);
        ++count[static_cast<std::size_t>(c.cy * 20 + c.cx)];
      }
    for (int n : count) EXPECT_GT(n, 0);
  }
}

TEST(KdTree2, MatchesExhaustiveSort) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coord(0, 30);
  std::vector<KdTree2::Point> pts;
  for (std::uint32_t i = 0; i < 200; ++i) pts.push_back({coord(rng), coord(rng), i});
  const KdTree2 tree(pts);
  std::uniform_real_distribution<double> q(-2.0, 32.0);
  for (int t = 0; t < 300; ++t) {
    const double qu = q(rng), qv = q(rng);
    auto sorted = pts;
    std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
      const double da = (a.u - qu) * (a.u - qu) + (a.v - qv) * (a.v - qv);
      const double db = (b.u - qu) * (b.u - qu) + (b.v - qv) * (b.v - qv);
      if (da != db) return da < db;
      if (a.v != b.v) return a.v < b.v;
      return a.u < b.u;
    });
    const auto got = tree.nearest(qu, qv, 5);
    ASSERT_EQ(got.size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& p = pts[got[k]];
      EXPECT_EQ(p.u, sorted[k].u);
      EXPECT_EQ(p.v, sorted[k].v);
    }
  }
}

TEST(Densify, CellMeanPropagates) {
  const SegMap seg = uniform_seg(40, 40, 7);
  SparseDepth sparse;
  sparse.samples = {{0, 0, 2.0}, {1, 1, 4.0}};  // both in cell (0, 0), 2x2 pixels
  const DepthMap d = densify(sparse, seg, GridSpec{});
  EXPECT_EQ(d(0, 0), 3.0);
  EXPECT_EQ(d(1, 0), 3.0);
  EXPECT_EQ(d(0, 1), 3.0);
  EXPECT_EQ(d(1, 1), 3.0);
}

TEST(Densify, EmptyCellUsesFiveNearest) {
  const SegMap seg = uniform_seg(40, 40, 7);
  SparseDepth sparse;
  for (int i = 0; i < 5; ++i) sparse.samples.push_back({2 * i, 0, 1.0 + i});
  const DepthMap d = densify(sparse, seg, GridSpec{});
  EXPECT_EQ(d(39, 39), 3.0);
  EXPECT_EQ(d(20, 20), 3.0);
}

TEST(Densify, FewerThanFiveUsesAll) {
  const SegMap seg = uniform_seg(40, 40, 7);
  SparseDepth sparse;
  sparse.samples = {{5, 5, 2.0}};
  const DepthMap d = densify(sparse, seg, GridSpec{});
  for (double v : d.values()) EXPECT_EQ(v, 2.0);
}

TEST(Densify, InvalidSetIsUnlabeledAbsentOrMasked) {
  SegMap seg = uniform_seg(40, 40, 1);
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 40; ++u) {
      if (u < 5) seg.labels(u, v) = 0;            // unlabeled
      else if (u >= 30) seg.labels(u, v) = 3;     // category without samples
    }
  MaskMap mask(40, 40, 1.0);
  for (int v = 10; v < 14; ++v)
    for (int u = 10; u < 14; ++u) mask(u, v) = 0.0;
  SparseDepth sparse;
  sparse.samples = {{8, 8, 2.0}, {20, 30, 5.0}, {11, 11, 99.0}};  // last one sits under the mask
  const DepthMap d = densify(sparse, seg, GridSpec{}, &mask);
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 40; ++u) {
      const bool expect_invalid = seg.labels(u, v) == 0 || seg.labels(u, v) == 3 || mask(u, v) == 0.0;
      EXPECT_EQ(d(u, v) == 0.0, expect_invalid) << u << "," << v;
      if (!expect_invalid) {
        EXPECT_LT(d(u, v), 99.0);
      }
    }
}

TEST(Densify, Errors) {
  const SegMap seg = uniform_seg(40, 40, 1);
  EXPECT_THROW(densify(SparseDepth{}, seg, GridSpec{}), EmptyInputError);
  SparseDepth sparse;
  sparse.samples = {{1, 1, 1.0}};
  SparseDepth outside;
  outside.samples = {{40, 1, 1.0}};
  EXPECT_THROW(densify(outside, seg, GridSpec{}), OutOfBoundsError);
  const MaskMap wrong(10, 10, 1.0);
  EXPECT_THROW(densify(sparse, seg, GridSpec{}, &wrong), DimensionMismatchError);
}

TEST(Densify, SampleOrderDoesNotMatter) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = oracle::random_densify_case(seed);
    const DepthMap a = densify(c.sparse, c.seg, GridSpec{}, c.use_mask ? &c.mask : nullptr);
    std::mt19937_64 rng(seed + 100);
    std::shuffle(c.sparse.samples.begin(), c.sparse.samples.end(), rng);
    const DepthMap b = densify(c.sparse, c.seg, GridSpec{}, c.use_mask ? &c.mask : nullptr);
    EXPECT_EQ(a, b);
  }
}

TEST(Densify, ExactOnPiecewiseConstantDepth) {
  // each category is a fronto-parallel plane of its own depth
  SegMap seg = uniform_seg(60, 40, 1);
  DepthMap truth(60, 40);
  for (int v = 0; v < 40; ++v)
    for (int u = 0; u < 60; ++u) {
      const std::uint16_t c = static_cast<std::uint16_t>(1 + (u / 15 + v / 10) % 4);
      seg.labels(u, v) = c;
      truth(u, v) = 1.5 * c;
    }
  SparseDepth sparse;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pu(0, 59), pv(0, 39);
  std::vector<bool> used(60 * 40, false);
  for (int i = 0; i < 200; ++i) {
    const int u = pu(rng), v = pv(rng);
    if (used[static_cast<std::size_t>(v * 60 + u)]) continue;
    used[static_cast<std::size_t>(v * 60 + u)] = true;
    sparse.samples.push_back({u, v, truth(u, v)});
  }
  const DepthMap d = densify(sparse, seg, GridSpec{});
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i], truth[i]);
}

TEST(Densify, BruteForceOracle) {
  const auto r = oracle::run_densify_suite(2024, 60);
  EXPECT_EQ(r.cases, 60);
  EXPECT_EQ(r.identical, r.cases);
  EXPECT_GT(r.with_fallback, 0);
  EXPECT_GT(r.with_empty_fill, 0);
}

#include "adaptvo/oracle.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <limits>
#include <tuple>

namespace adaptvo::oracle {

DepthMap brute_force_densify(const SparseDepth& sparse, const SegMap& seg, const GridSpec& grid,
                             const MaskMap* dynamic_mask) {
  if (sparse.samples.empty()) throw EmptyInputError("sparse depth is empty");
  const int w = seg.width();
  const int h = seg.height();
  if (grid.divisions < 1 || w < grid.divisions || h < grid.divisions)
    throw std::invalid_argument("image is smaller than the grid");
  const int cw = w / grid.divisions;
  const int ch = h / grid.divisions;
  auto cell = [&](int u, int v) {
    return std::pair{std::min(u / cw, grid.divisions - 1), std::min(v / ch, grid.divisions - 1)};
  };
  auto usable = [&](int u, int v) {
    return seg.labels(u, v) != 0 && (dynamic_mask == nullptr || (*dynamic_mask)(u, v) != 0.0);
  };

  std::vector<DepthSample> samples;
  for (const auto& s : sparse.samples) {
    if (!seg.labels.contains(s.u, s.v)) throw OutOfBoundsError("sparse sample outside the image");
    if (usable(s.u, s.v)) samples.push_back(s);
  }
  std::sort(samples.begin(), samples.end(), [](const DepthSample& a, const DepthSample& b) {
    return std::tie(a.v, a.u, a.depth) < std::tie(b.v, b.u, b.depth);
  });

  using Key = std::tuple<int, int, std::uint16_t>;
  std::map<Key, std::vector<std::pair<int, int>>> regions;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (usable(u, v)) {
        const auto [cx, cy] = cell(u, v);
        regions[{cx, cy, seg.labels(u, v)}].emplace_back(u, v);
      }

  DepthMap dense(w, h, 0.0);
  for (const auto& [key, pixels] : regions) {
    const auto [cx, cy, label] = key;
    double sum = 0.0;
    int count = 0;
    bool any_in_category = false;
    for (const auto& s : samples) {
      if (seg.labels(s.u, s.v) != label) continue;
      any_in_category = true;
      if (cell(s.u, s.v) == std::pair{cx, cy}) {
        sum += s.depth;
        ++count;
      }
    }
    if (!any_in_category) continue;
    double value = 0.0;
    if (count > 0) {
      value = sum / count;
    } else {
      double su = 0.0;
      double sv = 0.0;
      for (const auto& [u, v] : pixels) {
        su += u;
        sv += v;
      }
      const double qu = su / static_cast<double>(pixels.size());
      const double qv = sv / static_cast<double>(pixels.size());
      std::vector<std::tuple<double, int, int, double>> ranked;
      for (const auto& s : samples) {
        if (seg.labels(s.u, s.v) != label) continue;
        const double du = s.u - qu;
        const double dv = s.v - qv;
        ranked.emplace_back(du * du + dv * dv, s.v, s.u, s.depth);
      }
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a)) <
               std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b));
      });
      const std::size_t k = std::min<std::size_t>(kFillNeighbours, ranked.size());
      double fill = 0.0;
      for (std::size_t i = 0; i < k; ++i) fill += std::get<3>(ranked[i]);
      value = fill / static_cast<double>(k);
    }
    for (const auto& [u, v] : pixels) dense(u, v) = value;
  }
  return dense;
}

Vec3 linear_triangulation(const Correspondence& match, const Pose& b_from_a, const CameraIntrinsics& K) {
  const Vec3 ra((match.pixel_a.x() - K.cx) / K.fx, (match.pixel_a.y() - K.cy) / K.fy, 1.0);
  const Vec3 rb((match.pixel_b.x() - K.cx) / K.fx, (match.pixel_b.y() - K.cy) / K.fy, 1.0);
  Eigen::Matrix<double, 3, 2> A;
  A.col(0) = rb;
  A.col(1) = -(b_from_a.rotation() * ra);
  const Eigen::Vector2d lambda = (A.transpose() * A).ldlt().solve(A.transpose() * b_from_a.translation());
  const Vec3 on_b = lambda(0) * rb;
  const Vec3 on_a = lambda(1) * (b_from_a.rotation() * ra) + b_from_a.translation();
  return 0.5 * (on_b + on_a);
}

DensifyCase random_densify_case(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_u(0, width - 1);
  std::uniform_int_distribution<int> pick_v(0, height - 1);
  std::uniform_real_distribution<double> depth(0.5, 30.0);
  std::uniform_int_distribution<int> pick_cat(1, 5);

  DensifyCase c;
  c.seg.labels = LabelRaster(width, height, 0);
  // Voronoi-style categories with a few unlabeled sites
  const int sites = 6 + static_cast<int>(rng() % 10);
  std::vector<std::tuple<int, int, std::uint16_t>> centers;
  for (int i = 0; i < sites; ++i) {
    const auto cat = static_cast<std::uint16_t>(i % 7 == 6 ? 0 : pick_cat(rng));
    centers.emplace_back(pick_u(rng), pick_v(rng), cat);
  }
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      int best = 0;
      int best_d = std::numeric_limits<int>::max();
      for (int i = 0; i < sites; ++i) {
        const int du = std::get<0>(centers[static_cast<std::size_t>(i)]) - u;
        const int dv = std::get<1>(centers[static_cast<std::size_t>(i)]) - v;
        if (du * du + dv * dv < best_d) {
          best_d = du * du + dv * dv;
          best = i;
        }
      }
      c.seg.labels(u, v) = std::get<2>(centers[static_cast<std::size_t>(best)]);
    }
  }
  // category 5 is kept sparse so the < 5 neighbour fallback is exercised
  const int n = 30 + static_cast<int>(rng() % 150);
  std::vector<char> used(static_cast<std::size_t>(width * height), 0);
  int sparse_cat = 0;
  c.sparse.frame_id = static_cast<int>(seed % 1000);
  for (int i = 0; i < n * 4 && static_cast<int>(c.sparse.samples.size()) < n; ++i) {
    const int u = pick_u(rng);
    const int v = pick_v(rng);
    const std::size_t idx = static_cast<std::size_t>(v * width + u);
    if (used[idx] != 0) continue;
    if (c.seg.labels(u, v) == 5 && ++sparse_cat > 3) continue;
    used[idx] = 1;
    c.sparse.samples.push_back({u, v, depth(rng)});
  }
  c.use_mask = (seed % 3) == 0;
  c.mask = MaskMap(width, height, 1.0);
  if (c.use_mask) {
    std::bernoulli_distribution drop(0.1);
    for (auto& m : c.mask.values()) m = drop(rng) ? 0.0 : 1.0;
  }
  return c;
}

DensifyReport run_densify_suite(std::uint64_t seed, int cases) {
  DensifyReport report;
  for (int i = 0; i < cases; ++i) {
    const DensifyCase c = random_densify_case(seed + static_cast<std::uint64_t>(i));
    const MaskMap* mask = c.use_mask ? &c.mask : nullptr;
    const GridSpec grid;
    const DepthMap fast = densify(c.sparse, c.seg, grid, mask);
    const DepthMap slow = brute_force_densify(c.sparse, c.seg, grid, mask);
    ++report.cases;
    if (fast == slow) ++report.identical;

    std::map<std::uint16_t, int> per_cat;
    std::map<std::pair<int, std::uint16_t>, int> per_region;
    for (const auto& s : c.sparse.samples) {
      const auto label = c.seg.labels(s.u, s.v);
      if (label == 0 || (mask != nullptr && (*mask)(s.u, s.v) == 0.0)) continue;
      ++per_cat[label];
    }
    bool fallback = false;
    for (const auto& [cat, n] : per_cat) fallback = fallback || static_cast<std::size_t>(n) < kFillNeighbours;
    if (fallback) ++report.with_fallback;
    // any labeled usable pixel whose region holds no sample
    bool empty_fill = false;
    for (const auto& s : c.sparse.samples) {
      const auto label = c.seg.labels(s.u, s.v);
      if (label == 0 || (mask != nullptr && (*mask)(s.u, s.v) == 0.0)) continue;
      const CellIndex ci = cell_of(s.u, s.v, c.seg.width(), c.seg.height(), grid);
      per_region[{ci.cy * grid.divisions + ci.cx, label}] = 1;
    }
    for (int v = 0; v < c.seg.height() && !empty_fill; ++v) {
      for (int u = 0; u < c.seg.width(); ++u) {
        const auto label = c.seg.labels(u, v);
        if (label == 0 || !per_cat.contains(label) || (mask != nullptr && (*mask)(u, v) == 0.0)) continue;
        const CellIndex ci = cell_of(u, v, c.seg.width(), c.seg.height(), grid);
        if (!per_region.contains({ci.cy * grid.divisions + ci.cx, label})) {
          empty_fill = true;
          break;
        }
      }
    }
    if (empty_fill) ++report.with_empty_fill;
  }
  return report;
}

TriangulationReport run_triangulation_suite(std::uint64_t seed, int cases) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const CameraIntrinsics K{50.0, 50.0, 31.5, 23.5, 64, 48};
  TriangulationReport report;
  while (report.cases < cases) {
    const Vec3 omega = 0.3 * Vec3(uni(rng), uni(rng), uni(rng)) / std::sqrt(3.0);
    Vec3 t(uni(rng), uni(rng), uni(rng));
    t = t.normalized() * (0.2 + 0.8 * std::abs(uni(rng)));
    const Pose b_from_a(so3_exp(omega), t);
    const Vec2 pa(31.5 + 30.0 * uni(rng), 23.5 + 22.0 * uni(rng));
    const double za = 6.0 + 4.0 * uni(rng);
    const Vec3 Pa = backproject(pa, za, K);
    const Vec3 Pb = b_from_a * Pa;
    if (Pb.z() < 0.5) continue;
    const Correspondence m{pa, project(Pb, K), 1.0};
    const Vec3 X = triangulate_two_view(m, b_from_a, K);
    report.max_error = std::max(report.max_error, (X - Pb).norm());
    report.max_oracle_gap = std::max(report.max_oracle_gap, (X - linear_triangulation(m, b_from_a, K)).norm());
    const double k = 0.25 + 4.0 * std::abs(uni(rng));
    const Vec3 Xk = triangulate_two_view(m, b_from_a.scaled(k), K);
    report.max_scaling_error = std::max(report.max_scaling_error, (Xk - k * X).norm() / (k * X.norm()));
    ++report.cases;
  }
  // identical pixels with no rotation: rays are parallel
  try {
    (void)triangulate_two_view({Vec2(20.0, 20.0), Vec2(20.0, 20.0), 1.0}, Pose(Mat3::Identity(), Vec3(0.5, 0.0, 0.0)),
                               K);
  } catch (const DegenerateGeometryError&) {
    report.parallel_detected = true;
  }
  // rays that meet behind both cameras
  try {
    const Pose b_from_a(Mat3::Identity(), Vec3(0.5, 0.0, 0.0));
    const Vec3 Pa(0.2, 0.1, -4.0);
    const Vec3 Pb = b_from_a * Pa;
    const Vec2 pa(K.fx * Pa.x() / Pa.z() + K.cx, K.fy * Pa.y() / Pa.z() + K.cy);
    const Vec2 pb(K.fx * Pb.x() / Pb.z() + K.cx, K.fy * Pb.y() / Pb.z() + K.cy);
    (void)triangulate_two_view({pa, pb, 1.0}, b_from_a, K);
  } catch (const CheiralityError&) {
    report.cheirality_detected = true;
  }
  return report;
}

// ---------------------------------------------------------------------------
// gradient check

GradcheckProblem make_gradcheck_problem(std::uint64_t seed, bool attach_ws) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr int w = 16;
  constexpr int h = 12;

  NetConfig cfg;
  cfg.widths = {kFeatureCount, 12, 12, 1};
  cfg.rank = 4;
  cfg.seed = seed;
  GradcheckProblem p;
  p.net = ToyDepthNet::create(cfg);
  for (auto& layer : p.net.mutable_layers())
    for (Eigen::Index j = 0; j < layer.refiner.b.size(); ++j) layer.refiner.b.data()[j] = 0.3 * gauss(rng);
  p.camera = {12.0, 12.0, 7.5, 5.5, w, h};
  p.weights.attach_ws = attach_ws;

  for (int f = 0; f < 3; ++f) {
    Image img(w, h);
    const double a1 = 0.3 + 0.4 * std::abs(uni(rng));
    const double a2 = 0.3 + 0.4 * std::abs(uni(rng));
    const double ph = 3.0 * uni(rng);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        img(u, v) = std::clamp(0.5 + 0.25 * std::sin(a1 * u + 0.7 * v + ph) + 0.15 * std::cos(a2 * v - 0.4 * u), 0.02,
                               0.98);
    p.images.push_back(img);
  }
  for (int k = 0; k < 2; ++k) {
    const Vec3 omega = 0.03 * Vec3(uni(rng), uni(rng), uni(rng));
    const Vec3 t = 0.08 * Vec3(uni(rng), uni(rng), uni(rng));
    p.prev_from_cur.emplace_back(so3_exp(omega), t);
    DepthMap dense(w, h, 0.0);
    MaskMap mask(w, h, 1.0);
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (std::abs(uni(rng)) < 0.7) dense[i] = 0.5 + 2.5 * std::abs(uni(rng));
      if (std::abs(uni(rng)) < 0.2) mask[i] = 0.0;
    }
    p.dense.push_back(dense);
    p.masks.push_back(mask);
  }
  if (!attach_ws) {
    std::vector<DepthMap> depth;
    for (const auto& img : p.images) depth.push_back(p.net.predict_depth(img));
    for (std::size_t k = 0; k < 2; ++k) {
      const PairView view{p.images[k], p.images[k + 1], depth[k], depth[k + 1], p.prev_from_cur[k], p.dense[k],
                          p.masks[k]};
      p.frozen_ws.push_back(pair_loss(view, p.camera, p.weights, false).w_s);
    }
  }
  return p;
}

double gradcheck_loss(const GradcheckProblem& p, const ToyDepthNet& net) {
  std::vector<DepthMap> depth;
  for (const auto& img : p.images) depth.push_back(net.predict_depth(img));
  double total = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const PairView view{p.images[k], p.images[k + 1], depth[k],  depth[k + 1], p.prev_from_cur[k], p.dense[k],
                        p.masks[k],  p.frozen_ws.empty() ? nullptr : &p.frozen_ws[k]};
    total += pair_loss(view, p.camera, p.weights, false).breakdown.l_total;
  }
  return total / 2.0;
}

Eigen::VectorXd gradcheck_analytic(const GradcheckProblem& p) {
  std::vector<RecordedDepth> rec;
  for (const auto& img : p.images) rec.push_back(p.net.predict_depth_recorded(img));
  std::vector<DepthMap> grads(3, DepthMap(p.camera.width, p.camera.height, 0.0));
  for (std::size_t k = 0; k < 2; ++k) {
    const PairView view{p.images[k], p.images[k + 1], rec[k].depth, rec[k + 1].depth, p.prev_from_cur[k], p.dense[k],
                        p.masks[k],        p.frozen_ws.empty() ? nullptr : &p.frozen_ws[k]};
    const PairLoss pl = pair_loss(view, p.camera, p.weights, true);
    for (std::size_t i = 0; i < pl.grad_cur.size(); ++i) {
      grads[k][i] += 0.5 * pl.grad_prev[i];
      grads[k + 1][i] += 0.5 * pl.grad_cur[i];
    }
  }
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.net.trainable_parameter_count()));
  for (std::size_t f = 0; f < 3; ++f) total += p.net.flatten(rec[f].tape.backprop_depth(grads[f]));
  return total;
}

Eigen::VectorXd gradcheck_numeric(const GradcheckProblem& p, double h) {
  ToyDepthNet net = p.net;
  const Eigen::VectorXd base = net.refiner_parameters();
  Eigen::VectorXd out(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Eigen::VectorXd x = base;
    x(i) = base(i) + h;
    net.set_refiner_parameters(x);
    const double plus = gradcheck_loss(p, net);
    x(i) = base(i) - h;
    net.set_refiner_parameters(x);
    const double minus = gradcheck_loss(p, net);
    out(i) = (plus - minus) / (2.0 * h);
  }
  return out;
}

double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw DimensionMismatchError("gradient sizes differ");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic(i);
    const double n = numeric(i);
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

GradcheckReport run_gradcheck_suite(std::uint64_t seed, int seeds) {
  GradcheckReport report;
  for (int s = 0; s < seeds; ++s) {
    const GradcheckProblem p = make_gradcheck_problem(seed + static_cast<std::uint64_t>(s), s % 2 == 1);
    const Eigen::VectorXd a = gradcheck_analytic(p);
    const Eigen::VectorXd n = gradcheck_numeric(p);
    report.max_relative_error = std::max(report.max_relative_error, max_relative_error(a, n));
    report.parameters += static_cast<std::size_t>(a.size());
    ++report.seeds;
  }
  return report;
}

SceneSpec make_pose_scene(std::uint64_t seed, int frames, double max_angle, double max_translation) {
  SceneSpec spec;
  spec.seed = seed;
  spec.camera = {32.0, 32.0, 31.5, 23.5, 64, 48};
  // a closed 14 x 6 x 18 m room, so every ray hits something
  spec.planes = {{Vec3::UnitZ(), 10.0, 1}, {-Vec3::UnitZ(), 8.0, 2}, {Vec3::UnitX(), 7.0, 3},
                 {-Vec3::UnitX(), 7.0, 3}, {Vec3::UnitY(), 2.0, 4},  {-Vec3::UnitY(), 4.0, 5}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto random_vector = [&](double max_norm) -> Vec3 {
    Vec3 d;
    do d = Vec3(unit(rng), unit(rng), unit(rng));
    while (d.norm() > 1.0 || d.norm() < 1e-3);
    return max_norm * d;
  };
  spec.trajectory.push_back(Pose::identity());
  for (int f = 1; f < frames; ++f) spec.trajectory.emplace_back(so3_exp(random_vector(max_angle)), random_vector(max_translation));
  return spec;
}

PosePair make_pose_pair(const SceneSpec& spec, const std::vector<FrameTruth>& frames, int a, int b,
                        const Pose& world_from_a, double depth_scale, std::size_t n, std::uint64_t seed) {
  // matches hold integer pixels of the second frame given, so ask for b -> a
  const CorrespondenceSet set = sample_correspondences(spec, frames, b, a, n, seed);
  DepthMap depth = frames[static_cast<std::size_t>(a)].depth;
  for (auto& d : depth.values()) d *= depth_scale;
  std::vector<Vec2> pixels;
  for (const auto& m : set.matches) pixels.push_back(m.pixel_b);
  PosePair pair;
  pair.points = init_map_points(depth, pixels, world_from_a, spec.camera, nullptr, a);
  for (const auto& p : pair.points) pair.observations.push_back(set.matches[p.source].pixel_a);
  return pair;
}

double rotation_gap(const Pose& a, const Pose& b) {
  return rotation_angle(a.rotation().transpose() * b.rotation());
}

PoseSuiteReport run_pose_suite(std::uint64_t seed, int cases) {
  PoseSuiteReport report;
  for (int c = 0; c < cases; ++c) {
    const SceneSpec spec = make_pose_scene(seed * 1000 + static_cast<std::uint64_t>(c));
    const auto frames = generate(spec);
    const Pose truth = frames[1].world_from_camera.inverse();
    report.max_true_angle = std::max(report.max_true_angle, rotation_gap(Pose::identity(), truth));
    report.max_true_translation = std::max(report.max_true_translation, frames[1].world_from_camera.translation().norm());
    ++report.cases;
    try {
      const PosePair pair = make_pose_pair(spec, frames, 0, 1, Pose::identity(), 1.0, 80, seed + static_cast<std::uint64_t>(c));
      const PoseSolveReport r = solve_pose(pair.points, pair.observations, Pose::identity(), spec.camera);
      if (r.converged) ++report.solved;
      report.max_rotation_error = std::max(report.max_rotation_error, rotation_gap(r.pose, truth));
      report.max_translation_error =
          std::max(report.max_translation_error, (r.pose.translation() - truth.translation()).norm());
    } catch (const std::exception&) {
      report.max_rotation_error = std::numeric_limits<double>::infinity();
      report.max_translation_error = std::numeric_limits<double>::infinity();
    }
  }
  return report;
}

namespace {

// Frame-to-frame tracking with map points from the previous estimate.
Trajectory track_scaled(const SceneSpec& spec, const std::vector<FrameTruth>& frames, double scale,
                        std::uint64_t seed) {
  Trajectory out;
  Pose world_from_cam = Pose::identity();
  out.push_back({0.0, world_from_cam});
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const int a = static_cast<int>(f) - 1;
    const PosePair pair = make_pose_pair(spec, frames, a, a + 1, world_from_cam, scale, 80, seed + f);
    const Pose initial = world_from_cam.inverse();
    const PoseSolveReport r = solve_pose(pair.points, pair.observations, initial, spec.camera);
    world_from_cam = r.pose.inverse();
    out.push_back({static_cast<double>(f), world_from_cam});
  }
  return out;
}

}  // namespace

ScaleCovarianceReport run_scale_covariance(std::uint64_t seed, const std::vector<double>& scales, int frames) {
  const SceneSpec spec = make_pose_scene(seed, frames, 0.15, 0.6);
  const auto truth = generate(spec);
  const Trajectory base = track_scaled(spec, truth, 1.0, seed);

  ScaleCovarianceReport report;
  report.scales = scales;
  report.min_es_change = std::numeric_limits<double>::infinity();
  // fixed inputs for the residual contrast, on the first pair
  const PosePair unit_pair = make_pose_pair(spec, truth, 0, 1, Pose::identity(), 1.0, 80, seed + 1);
  const Pose cam1 = base[1].pose.inverse();
  const double baseline = 0.1;
  for (double s : scales) {
    const Trajectory est = track_scaled(spec, truth, s, seed);
    for (std::size_t f = 0; f < est.size(); ++f) {
      report.max_rotation_gap = std::max(report.max_rotation_gap, rotation_gap(est[f].pose, base[f].pose));
      const Vec3 expect = s * base[f].pose.translation();
      if (expect.norm() > 0.0) {
        report.max_translation_rel_error =
            std::max(report.max_translation_rel_error, (est[f].pose.translation() - expect).norm() / expect.norm());
      }
    }
    report.max_ate = std::max(report.max_ate, trajectory_metrics(est, base).ate_rmse);

    const Pose cam1_scaled = cam1.scaled(s);
    for (std::size_t i = 0; i < unit_pair.points.size(); ++i) {
      const MapPoint& p = unit_pair.points[i];
      MapPoint q = p;
      q.world = s * p.world;
      const Vec2& obs = unit_pair.observations[i];
      report.max_e_change = std::max(
          report.max_e_change, (residual_e(q, obs, cam1_scaled, spec.camera) - residual_e(p, obs, cam1, spec.camera)).norm());
      // right-view coordinate consistent with the unit-scale geometry
      const Vec3 c = cam1 * p.world;
      const double u_right = spec.camera.fx * (c.x() - baseline) / c.z() + spec.camera.cx;
      const Vec3 r1 = residual_es(p, obs, u_right, cam1, spec.camera, baseline, 1.0);
      const Vec3 rs = residual_es(q, obs, u_right, cam1_scaled, spec.camera, baseline, 1.0);
      report.min_es_change = std::min(report.min_es_change, std::abs(rs.z() - r1.z()));
    }
  }
  return report;
}

}  // namespace adaptvo::oracle

#include "adaptvo/synthworld.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "adaptvo/adam.hpp"

namespace adaptvo {

namespace {

constexpr double kNoHit = std::numeric_limits<double>::infinity();
constexpr double kMinT = 1e-9;

struct Wave {
  Vec3 k;
  double phase;
};

struct Hit {
  double t = kNoHit;  // ray parameter == camera depth (unscaled units)
  int primitive = -1;
};

// Primitives are indexed planes first, then boxes.
class Scene {
 public:
  explicit Scene(const SceneSpec& spec) : spec_(spec) {
    const std::size_t n = spec.planes.size() + spec.boxes.size();
    waves_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull * (i + 1));
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (int w = 0; w < 3; ++w) {
        Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
        dir.normalize();
        const double wavelength = spec.min_wavelength + (spec.max_wavelength - spec.min_wavelength) * uni(rng);
        waves_[i].push_back({dir * (2.0 * std::numbers::pi / wavelength), 2.0 * std::numbers::pi * uni(rng)});
      }
    }
  }

  [[nodiscard]] std::size_t primitive_count() const { return waves_.size(); }

  [[nodiscard]] bool is_box(int p) const { return p >= static_cast<int>(spec_.planes.size()); }

  [[nodiscard]] const BoxSpec& box(int p) const { return spec_.boxes[static_cast<std::size_t>(p) - spec_.planes.size()]; }

  [[nodiscard]] Vec3 velocity(int p) const { return is_box(p) ? box(p).velocity : Vec3::Zero(); }

  [[nodiscard]] std::uint16_t category(int p) const {
    return is_box(p) ? box(p).category : spec_.planes[static_cast<std::size_t>(p)].category;
  }

  [[nodiscard]] std::uint16_t instance(int p) const {
    return is_box(p) ? box(p).instance : spec_.planes[static_cast<std::size_t>(p)].instance;
  }

  [[nodiscard]] Hit cast(const Vec3& o, const Vec3& d, int frame) const {
    Hit best;
    for (std::size_t i = 0; i < spec_.planes.size(); ++i) {
      const auto& pl = spec_.planes[i];
      const double denom = pl.normal.dot(d);
      if (std::abs(denom) < 1e-15) continue;
      const double t = (pl.offset - pl.normal.dot(o)) / denom;
      if (t > kMinT && t < best.t) best = {t, static_cast<int>(i)};
    }
    for (std::size_t i = 0; i < spec_.boxes.size(); ++i) {
      const auto& b = spec_.boxes[i];
      const Vec3 shift = b.velocity * static_cast<double>(frame);
      double t0 = -kNoHit;
      double t1 = kNoHit;
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        const double lo = b.min[a] + shift[a];
        const double hi = b.max[a] + shift[a];
        if (std::abs(d[a]) < 1e-15) {
          if (o[a] < lo || o[a] > hi) miss = true;
          continue;
        }
        double ta = (lo - o[a]) / d[a];
        double tb = (hi - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) miss = true;
      }
      if (miss) continue;
      const double t = t0 > kMinT ? t0 : t1;
      if (t > kMinT && t < best.t) best = {t, static_cast<int>(spec_.planes.size() + i)};
    }
    return best;
  }

  [[nodiscard]] double texture(int p, const Vec3& local) const {
    double s = 0.0;
    for (const auto& w : waves_[static_cast<std::size_t>(p)]) s += std::sin(w.k.dot(local) + w.phase);
    return s / static_cast<double>(waves_[static_cast<std::size_t>(p)].size());
  }

  [[nodiscard]] double palette(std::uint16_t category) const {
    const auto& pal = spec_.shift.palette;
    return category < pal.size() ? pal[category] : 1.0;
  }

 private:
  const SceneSpec& spec_;
  std::vector<std::vector<Wave>> waves_;
};

Vec3 camera_ray(const CameraIntrinsics& K, const Vec2& pixel) {
  return {(pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy, 1.0};
}

// Location of the surface seen at `pixel` of frame `from` in frame `to`, when
// visible there. Unscaled world units throughout.
std::optional<Vec2> locate(const Scene& scene, const SceneSpec& spec, int from, const Vec2& pixel, int to,
                           int* primitive_out = nullptr) {
  const Pose& T_from = spec.trajectory[static_cast<std::size_t>(from)];
  const Vec3 d = T_from.rotation() * camera_ray(spec.camera, pixel);
  const Hit hit = scene.cast(T_from.translation(), d, from);
  if (hit.primitive < 0) return std::nullopt;
  if (primitive_out != nullptr) *primitive_out = hit.primitive;
  const Vec3 world = T_from.translation() + hit.t * d;
  const Vec3 moved = world + scene.velocity(hit.primitive) * static_cast<double>(to - from);
  const Pose& T_to = spec.trajectory[static_cast<std::size_t>(to)];
  const Vec3 q = T_to.inverse() * moved;
  if (!(q.z() > kMinT)) return std::nullopt;
  const Vec2 p(spec.camera.fx * q.x() / q.z() + spec.camera.cx, spec.camera.fy * q.y() / q.z() + spec.camera.cy);
  if (!spec.camera.contains(p)) return std::nullopt;
  const Vec3 d_to = T_to.rotation() * camera_ray(spec.camera, p);
  const Hit back = scene.cast(T_to.translation(), d_to, to);
  if (back.primitive != hit.primitive || std::abs(back.t - q.z()) > 1e-6 * q.z()) return std::nullopt;
  return p;
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

DomainShift default_shift() {
  DomainShift s;
  s.gamma = 2.0;
  s.depth_scale = 1.5;
  // A uniform albedo change: per-category factors cannot be told apart from
  // shading in a single image, so no amount of adaptation would undo them.
  s.palette = std::vector<double>(6, 0.5);
  return s;
}

double shade(double distance, double length) { return 0.08 + 0.9 * std::exp(-distance / length); }

std::vector<FrameTruth> generate(const SceneSpec& spec) {
  spec.camera.validate();
  if (spec.trajectory.empty()) throw EmptyInputError("scene has no camera poses");
  if (!(spec.shift.depth_scale > 0.0) || !(spec.shift.gamma > 0.0)) throw std::invalid_argument("invalid domain shift");
  const Scene scene(spec);
  const int w = spec.camera.width;
  const int h = spec.camera.height;
  const double s = spec.shift.depth_scale;

  std::vector<FrameTruth> frames;
  frames.reserve(spec.trajectory.size());
  for (std::size_t f = 0; f < spec.trajectory.size(); ++f) {
    const Pose& T = spec.trajectory[f];
    FrameTruth fr;
    fr.id = static_cast<int>(f);
    fr.image = Image(w, h, 0.0);
    fr.depth = DepthMap(w, h, 0.0);
    fr.seg.labels = LabelRaster(w, h, 0);
    fr.seg.instances = LabelRaster(w, h, 0);
    fr.primitive = LabelRaster(w, h, 0);
    fr.flow_u = ScalarMap(w, h, 0.0);
    fr.flow_v = ScalarMap(w, h, 0.0);
    fr.flow_valid = ValidityMap(w, h, 0);
    fr.world_from_camera = Pose(T.rotation(), s * T.translation());
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const Vec3 d = T.rotation() * camera_ray(spec.camera, Vec2(u, v));
        const Hit hit = scene.cast(T.translation(), d, static_cast<int>(f));
        if (hit.primitive < 0) continue;
        const double depth = s * hit.t;
        const Vec3 world = T.translation() + hit.t * d;
        const Vec3 local = world - scene.velocity(hit.primitive) * static_cast<double>(f);
        const std::uint16_t cat = scene.category(hit.primitive);
        const double distance = s * (spec.shade_axis.dot(world) - spec.shade_reference);
        double value = shade(distance, spec.shade_length) * scene.palette(cat) * (1.0 + spec.texture_amplitude * scene.texture(hit.primitive, local));
        value = std::pow(std::clamp(value, 0.0, 1.0), 1.0 / spec.shift.gamma);
        fr.image(u, v) = std::round(value * 255.0) / 255.0;
        fr.depth(u, v) = depth;
        fr.seg.labels(u, v) = cat;
        (*fr.seg.instances)(u, v) = scene.instance(hit.primitive);
        fr.primitive(u, v) = static_cast<std::uint16_t>(hit.primitive + 1);
        if (f > 0) {
          const auto p = locate(scene, spec, static_cast<int>(f), Vec2(u, v), static_cast<int>(f) - 1);
          if (p) {
            fr.flow_u(u, v) = p->x() - u;
            fr.flow_v(u, v) = p->y() - v;
            fr.flow_valid(u, v) = 1;
          }
        }
      }
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

Pose relative_pose(const FrameTruth& a, const FrameTruth& b) { return b.world_from_camera.inverse() * a.world_from_camera; }

CorrespondenceSet sample_correspondences(const SceneSpec& spec, const std::vector<FrameTruth>& frames, int a, int b,
                                         std::size_t n, std::uint64_t seed, CorrespondenceMode mode, double sigma) {
  const auto count = static_cast<int>(frames.size());
  if (a < 0 || b < 0 || a >= count || b >= count || a == b) throw std::invalid_argument("invalid frame pair");
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
  const Scene scene(spec);
  const int w = spec.camera.width;
  const int h = spec.camera.height;

  std::vector<int> order(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  CorrespondenceSet set;
  set.frame_a = a;
  set.frame_b = b;
  for (const int idx : order) {
    if (set.matches.size() == n) break;
    const Vec2 pb(idx % w, idx / w);
    int primitive = -1;
    const auto pa = locate(scene, spec, b, pb, a, &primitive);
    if (!pa) continue;
    if (mode == CorrespondenceMode::kStaticOnly && !scene.velocity(primitive).isZero(0.0)) continue;
    Correspondence m;
    m.pixel_b = pb;
    m.pixel_a = *pa;
    if (sigma > 0.0) m.pixel_a += Vec2(sigma * noise(rng), sigma * noise(rng));
    set.matches.push_back(m);
  }
  if (set.matches.size() < n) throw EmptyInputError("not enough covisible pixels for the requested matches");
  return set;
}

FrameStream make_stream(const SceneSpec& spec, const std::vector<FrameTruth>& frames, const StreamOptions& options) {
  FrameStream stream;
  stream.camera = spec.camera;
  for (const auto& f : frames)
    stream.frames.push_back({f.id, options.frame_interval * f.id, f.image, f.seg});
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    const int a = static_cast<int>(i);
    stream.matches.push_back(sample_correspondences(spec, frames, a, a + 1, options.matches,
                                                    options.seed + i, options.mode, options.sigma));
  }
  return stream;
}

SceneSpec make_room_scene(const RoomOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  SceneSpec spec;
  spec.seed = options.seed;
  const double f = options.focal * options.width;
  spec.camera = {f, f, 0.5 * (options.width - 1), 0.5 * (options.height - 1), options.width, options.height};
  spec.shift = options.shift;
  const double L = options.size;
  spec.shade_reference = -0.5 * L;
  spec.shade_length = 5.0 * L;
  spec.min_wavelength *= L;
  spec.max_wavelength *= L;

  const double half_width = L * range(3.0, 4.5);
  const double back = L * range(10.0, 13.0);
  const double floor_y = L * range(1.2, 1.6);
  const double ceiling_y = -L * range(2.0, 2.6);
  spec.planes.push_back({Vec3::UnitY(), floor_y, 1, 0});
  spec.planes.push_back({Vec3::UnitX(), -half_width, 2, 0});
  spec.planes.push_back({Vec3::UnitX(), half_width, 2, 0});
  spec.planes.push_back({Vec3::UnitZ(), back, 2, 0});
  spec.planes.push_back({Vec3::UnitY(), ceiling_y, 3, 0});

  for (int i = 0; i < options.boxes; ++i) {
    const double sx = L * range(0.6, 1.5);
    const double sz = L * range(0.6, 1.5);
    const double sy = L * range(0.6, 2.0);
    const double x = range(-half_width + 0.2 * L, half_width - 0.2 * L - sx);
    const double z = range(3.5 * L, back - 2.0 * L);
    BoxSpec b;
    b.min = Vec3(x, floor_y - sy, z);
    b.max = Vec3(x + sx, floor_y, z + sz);
    b.category = 4;
    b.instance = static_cast<std::uint16_t>(i + 1);
    spec.boxes.push_back(b);
  }

  const double phase[5] = {range(0, 6.3), range(0, 6.3), range(0, 6.3), range(0, 6.3), range(0, 6.3)};
  const double tau = 2.0 * std::numbers::pi * options.step;
  for (int f = 0; f < options.frames; ++f) {
    const double x = L * 1.2 * std::sin(tau * f / 50.0 + phase[0]);
    const double z = L * (0.3 * std::sin(tau * f / 37.0 + phase[1]) - 0.5);
    const double y = L * 0.1 * std::sin(tau * f / 23.0 + phase[2]);
    const double yaw = 0.06 * std::sin(tau * f / 61.0 + phase[3]);
    const double pitch = 0.03 * std::sin(tau * f / 29.0 + phase[4]);
    const Mat3 R = so3_exp(Vec3(0.0, yaw, 0.0)) * so3_exp(Vec3(pitch, 0.0, 0.0));
    spec.trajectory.emplace_back(R, Vec3(x, y, z));
  }
  return spec;
}

SceneSpec make_moving_box_scene(const MovingBoxOptions& options) {
  SceneSpec spec;
  spec.seed = options.seed;
  const double f = 0.5 * options.width;
  spec.camera = {f, f, 0.5 * (options.width - 1), 0.5 * (options.height - 1), options.width, options.height};
  spec.planes.push_back({Vec3::UnitY(), 1.6, 1, 0});
  spec.planes.push_back({Vec3::UnitZ(), 9.0, 2, 0});
  BoxSpec box;
  box.min = Vec3(-2.6, -1.6, 4.5);
  box.max = Vec3(1.6, 1.6, 5.5);
  box.category = 5;
  box.instance = 1;
  box.velocity = options.velocity;
  spec.boxes.push_back(box);
  for (int i = 0; i < options.frames; ++i) spec.trajectory.emplace_back();
  return spec;
}

PretrainResult pretrain_toy_net(const std::vector<SceneSpec>& scenes, const PretrainOptions& options) {
  if (scenes.empty()) throw EmptyInputError("no pre-training scenes");
  if (options.frame_stride < 1) throw std::invalid_argument("frame stride must be >= 1");
  std::vector<DepthSupervision> samples;
  for (const auto& spec : scenes) {
    const auto frames = generate(spec);
    for (std::size_t f = 0; f < frames.size(); f += static_cast<std::size_t>(options.frame_stride))
      samples.push_back({frames[f].image, frames[f].depth});
  }
  return pretrain_toy_net(samples, options);
}

PretrainResult pretrain_toy_net(const std::vector<DepthSupervision>& samples, const PretrainOptions& options) {
  if (samples.empty()) throw EmptyInputError("no pre-training frames");

  std::vector<Eigen::MatrixXd> feature_blocks;
  std::vector<double> targets;
  for (const auto& sample : samples) {
    if (!sample.image.same_shape(sample.depth)) throw DimensionMismatchError("image and depth sizes differ");
    const Eigen::MatrixXd x = extract_features(sample.image);
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < sample.depth.size(); ++i) {
      const double d = sample.depth[i];
      if (!(d > 0.0)) continue;
      keep.push_back(static_cast<Eigen::Index>(i));
      targets.push_back(inverse_softplus(1.0 / d - kInverseDepthFloor));
    }
    feature_blocks.emplace_back(x(Eigen::all, keep));
  }
  Eigen::Index total = 0;
  for (const auto& b : feature_blocks) total += b.cols();
  if (total == 0) throw EmptyInputError("pre-training scenes contain no valid depth");
  Eigen::MatrixXd features(kFeatureCount, total);
  Eigen::Index at = 0;
  for (const auto& b : feature_blocks) {
    features.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  const Eigen::Map<const Eigen::RowVectorXd> z_star(targets.data(), total);

  ToyDepthNet net = ToyDepthNet::create(options.net);

  // ridge fit of the output layer on the frozen hidden features
  {
    const auto& layers = net.layers();
    Eigen::MatrixXd hidden = features;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      Eigen::MatrixXd z = layers[l].weight * hidden;
      z.colwise() += layers[l].bias;
      hidden = layers[l].activation == Activation::kTanh ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
    const Eigen::Index d = hidden.rows();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d + 1, d + 1);
    gram.topLeftCorner(d, d).noalias() = hidden * hidden.transpose();
    const Eigen::VectorXd sums = hidden.rowwise().sum();
    gram.topRightCorner(d, 1) = sums;
    gram.bottomLeftCorner(1, d) = sums.transpose();
    gram(d, d) = static_cast<double>(total);
    Eigen::VectorXd rhs(d + 1);
    rhs.head(d).noalias() = hidden * z_star.transpose();
    rhs(d) = z_star.sum();
    gram.diagonal().head(d).array() += options.ridge * static_cast<double>(total);
    const Eigen::VectorXd solution = gram.ldlt().solve(rhs);
    auto& last = net.mutable_layers().back();
    last.weight = solution.head(d).transpose();
    last.bias = solution.tail(1);
  }

  PretrainResult result;
  if (options.epochs > 0) {
    auto flatten = [](const ToyDepthNet& n) {
      Eigen::Index size = 0;
      for (const auto& l : n.layers()) size += l.weight.size() + l.bias.size();
      Eigen::VectorXd flat(size);
      Eigen::Index k = 0;
      for (const auto& l : n.layers()) {
        flat.segment(k, l.weight.size()) = l.weight.reshaped();
        k += l.weight.size();
        flat.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
      }
      return flat;
    };
    Eigen::VectorXd params = flatten(net);
    AdamState adam;
    std::mt19937_64 rng(options.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double sq = 0.0;
      for (std::size_t start = 0; start < order.size(); start += options.batch) {
        const std::size_t stop = std::min(order.size(), start + options.batch);
        const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(stop));
        GradientTape tape = net.record(features(Eigen::all, idx));
        const Eigen::RowVectorXd err = tape.output() - z_star(Eigen::all, idx);
        sq += err.squaredNorm();
        BaseGradients base;
        tape.backprop(2.0 * err / static_cast<double>(idx.size()), &base);
        Eigen::VectorXd grad(params.size());
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < base.weight.size(); ++l) {
          grad.segment(k, base.weight[l].size()) = base.weight[l].reshaped();
          k += base.weight[l].size();
          grad.segment(k, base.bias[l].size()) = base.bias[l];
          k += base.bias[l].size();
        }
        adam_step(params, grad, adam, options.learning_rate);
        Eigen::Index j = 0;
        for (auto& l : net.mutable_layers()) {
          l.weight.reshaped() = params.segment(j, l.weight.size());
          j += l.weight.size();
          l.bias = params.segment(j, l.bias.size());
          j += l.bias.size();
        }
      }
      result.loss_curve.push_back(sq / static_cast<double>(total));
    }
  }
  result.net = std::move(net);
  return result;
}

ShiftFixture make_shift_fixture(const ShiftFixtureOptions& options) {
  ShiftFixture fx;
  for (int s = 0; s < options.source_scenes; ++s) {
    RoomOptions o;
    o.seed = 100 + static_cast<std::uint64_t>(s);
    o.width = options.width;
    o.height = options.height;
    SceneSpec spec = make_room_scene(o);
    spec.texture_amplitude = options.texture_amplitude;
    fx.source.push_back(std::move(spec));
  }
  RoomOptions t;
  t.seed = 7;
  t.width = options.width;
  t.height = options.height;
  t.frames = options.target_frames;
  t.shift = default_shift();
  fx.target = make_room_scene(t);
  fx.target.texture_amplitude = options.texture_amplitude;
  fx.target_frames = generate(fx.target);
  fx.stream = make_stream(fx.target, fx.target_frames, options.stream);
  fx.config.lr.base = 5e-3;
  fx.config.loss.lambda_d = 1.0;
  return fx;
}

double mean_abs_rel(const ToyDepthNet& net, const std::vector<FrameTruth>& frames) {
  double sum = 0.0;
  int n = 0;
  for (const auto& f : frames) {
    sum += aligned_depth_metrics(net.predict_depth(f.image), f.depth).abs_rel;
    ++n;
  }
  if (n == 0) throw EmptyInputError("no frames to evaluate");
  return sum / n;
}

}  // namespace adaptvo

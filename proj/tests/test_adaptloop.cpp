#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adaptvo/adaptloop.hpp"
#include "adaptvo/synthworld.hpp"

using namespace adaptvo;

namespace {

// Independent stop rule: EMA with weight 0.6 on the past, sample variance of
// the last `window` smoothed values.
std::vector<bool> simulate_stop(const std::vector<double>& losses, const StopConfig& c) {
  std::vector<double> smoothed;
  std::vector<bool> out;
  bool stopped = false;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    smoothed.push_back(i == 0 ? losses[0] : c.smoothing * smoothed.back() + (1.0 - c.smoothing) * losses[i]);
    const std::size_t n = smoothed.size();
    if (!stopped && static_cast<int>(n) >= c.min_steps && static_cast<int>(n) >= c.window) {
      double mean = 0.0;
      for (std::size_t k = n - c.window; k < n; ++k) mean += smoothed[k];
      mean /= c.window;
      double ss = 0.0;
      for (std::size_t k = n - c.window; k < n; ++k) ss += (smoothed[k] - mean) * (smoothed[k] - mean);
      stopped = ss / (c.window - 1) < c.tau;
    }
    out.push_back(stopped);
  }
  return out;
}

struct SmallRun {
  ShiftFixture fixture;
  ToyDepthNet net;
};

// A few target frames and a net fit on one source room at a coarse stride;
// enough to exercise the loop, not to reach the acceptance numbers.
SmallRun small_run(int frames = 7, bool shifted = true) {
  ShiftFixtureOptions o;
  o.target_frames = frames;
  o.source_scenes = 1;
  SmallRun r{make_shift_fixture(o), ToyDepthNet::create(NetConfig{})};
  if (!shifted) {
    RoomOptions ro;
    ro.seed = r.fixture.target.seed;
    ro.frames = frames;
    r.fixture.target = make_room_scene(ro);
    r.fixture.target.texture_amplitude = o.texture_amplitude;
    r.fixture.target_frames = generate(r.fixture.target);
    r.fixture.stream = make_stream(r.fixture.target, r.fixture.target_frames, o.stream);
  }
  PretrainOptions po;
  po.frame_stride = 6;
  r.net = pretrain_toy_net(r.fixture.source, po).net;
  return r;
}

bool same_pose(const Pose& a, const Pose& b) { return a.rotation() == b.rotation() && a.translation() == b.translation(); }

}  // namespace

TEST(LrSchedule, Examples) {
  EXPECT_DOUBLE_EQ(lr_at(0), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(99), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(100), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(250), 1e-6);
  LrSchedule s{2e-3, 0.5, 10};
  EXPECT_DOUBLE_EQ(s.at(25), 5e-4);
}

TEST(Adam, FirstStepByHand) {
  Eigen::VectorXd p(3), g(3);
  p << 1.0, -2.0, 0.5;
  g << 0.3, -4.0, 1e-9;
  AdamState st;
  Eigen::VectorXd q = p;
  adam_step(q, g, st, 0.01);
  // m_hat = g, v_hat = g^2 after bias correction
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], p[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, ZeroGradientKeepsParametersAndDecaysMoments) {
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  AdamState st;
  adam_step(p, Eigen::VectorXd::Constant(5, 0.5), st, 0.1);
  const Eigen::VectorXd after_first = p;
  const Eigen::VectorXd m = st.m, v = st.v;
  adam_step(p, Eigen::VectorXd::Zero(5), st, 0.0);
  EXPECT_EQ(p, after_first);
  EXPECT_LT((st.m - 0.9 * m).norm(), 1e-15);
  EXPECT_LT((st.v - 0.99 * v).norm(), 1e-15);
}

TEST(Adam, Deterministic) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Eigen::VectorXd p(50), g(50);
  for (int i = 0; i < 50; ++i) {
    p[i] = n(rng);
    g[i] = n(rng);
  }
  AdamState a, b;
  Eigen::VectorXd pa = p, pb = p;
  for (int k = 0; k < 5; ++k) {
    adam_step(pa, g, a, 1e-3);
    adam_step(pb, g, b, 1e-3);
  }
  EXPECT_EQ(pa, pb);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.v, b.v);
}

TEST(StopController, ConstantStreamStopsAtMinSteps) {
  StopState s;
  int first = -1;
  for (int i = 1; i <= 350; ++i)
    if (s.update(0.7) && first < 0) first = i;
  EXPECT_EQ(first, 300);
}

TEST(StopController, WindowFillGatesShortMinimum) {
  StopConfig c;
  c.min_steps = 10;
  StopState s(c);
  int first = -1;
  for (int i = 1; i <= 80; ++i)
    if (s.update(1.0) && first < 0) first = i;
  EXPECT_EQ(first, 50);
}

TEST(StopController, NoStopBeforeMinSteps) {
  StopState s;
  for (int i = 1; i < 300; ++i) EXPECT_FALSE(s.update(0.0));
  EXPECT_EQ(s.variance(), 0.0);
}

TEST(StopController, AlternatingStreamMatchesSimulation) {
  for (double amplitude : {10.0, 1.0, 0.5, 0.3}) {
    std::vector<double> losses;
    for (int i = 0; i < 600; ++i) losses.push_back(i % 2 == 0 ? 0.0 : amplitude);
    const StopConfig c;
    const auto expect = simulate_stop(losses, c);
    StopState s(c);
    for (std::size_t i = 0; i < losses.size(); ++i) ASSERT_EQ(s.update(losses[i]), expect[i]) << amplitude << " " << i;
  }
}

TEST(StopController, HighVarianceNeverStops) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (auto mode : {VarianceMode::kSmoothedWindow, VarianceMode::kEmaSquaredDeviation}) {
    StopConfig c;
    c.mode = mode;
    StopState s(c);
    for (int i = 0; i < 1000; ++i) ASSERT_FALSE(s.update(u(rng))) << i;
  }
}

TEST(StopController, FlagIsMonotone) {
  StopState s;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool seen = false;
  for (int i = 0; i < 800; ++i) {
    // quiet for a while, then noisy
    const bool flag = s.update(i < 400 ? 1.0 : 100.0 * u(rng));
    if (seen) {
      ASSERT_TRUE(flag);
    }
    seen = seen || flag;
  }
  EXPECT_TRUE(seen);
}

TEST(StopController, EmaSquaredDeviationMode) {
  StopConfig c;
  c.mode = VarianceMode::kEmaSquaredDeviation;
  StopState s(c);
  // by hand: ema 1 -> 1.8, squared deviation ema 0.4 * 4 = 1.6
  s.update(1.0);
  s.update(3.0);
  EXPECT_DOUBLE_EQ(s.ema(), 1.8);
  EXPECT_DOUBLE_EQ(s.variance(), 1.6);
  StopState q(c);
  int first = -1;
  for (int i = 1; i <= 320; ++i)
    if (q.update(2.0) && first < 0) first = i;
  EXPECT_EQ(first, 300);
}

TEST(StopController, RejectsBadConfig) {
  StopConfig c;
  c.window = 1;
  EXPECT_THROW(StopState{c}, std::invalid_argument);
  c = StopConfig{};
  c.smoothing = 1.0;
  EXPECT_THROW(StopState{c}, std::invalid_argument);
}

TEST(Config, RoundTrip) {
  AdaptConfig c;
  c.stop.min_steps = 120;
  c.stop.mode = VarianceMode::kEmaSquaredDeviation;
  c.loss.lambda_d = 0.7;
  c.loss.attach_ws = true;
  c.lr.base = 3e-3;
  c.batch_pairs = 2;
  c.learning = false;
  c.max_steps = 9;
  const std::string text = dump_config(c);
  const AdaptConfig back = parse_config(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.stop.min_steps, 120);
  EXPECT_EQ(back.stop.mode, VarianceMode::kEmaSquaredDeviation);
  EXPECT_EQ(back.lr.base, 3e-3);
  EXPECT_FALSE(back.learning);
  EXPECT_EQ(dump_config(parse_config("{}")), dump_config(AdaptConfig{}));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config(R"({"learning_rate": 1})"), FormatError);
  EXPECT_THROW(parse_config(R"({"stop": {"variance": "median"}})"), FormatError);
  try {
    parse_config("{\"tau_s\": 0.5,,}");
    FAIL() << "no error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 15u);
  }
}

TEST(ComputePairMasks, StaticExactGeometryKeepsPixels) {
  MovingBoxOptions o;
  o.velocity = Vec3::Zero();
  const SceneSpec spec = make_moving_box_scene(o);
  const auto frames = generate(spec);
  const PairMasks pm = compute_pair_masks(frames[0].depth, frames[1].depth, frames[0].seg, frames[1].seg,
                                          relative_pose(frames[0], frames[1]), spec.camera, kSemanticIouThreshold,
                                          kGeometricRankFraction);
  std::size_t semantic_zero = 0;
  for (double m : pm.semantic.values()) semantic_zero += m == 0.0;
  EXPECT_EQ(semantic_zero, 0u);
  for (std::size_t i = 0; i < pm.combined.size(); ++i) EXPECT_EQ(pm.combined[i], pm.semantic[i] * pm.geometric[i]);
}

TEST(ComputePairMasks, MovingObjectGetsNoGeometricGradient) {
  const SceneSpec spec = make_moving_box_scene({});
  const auto frames = generate(spec);
  const Pose cur_from_prev = relative_pose(frames[0], frames[1]);
  const PairMasks pm = compute_pair_masks(frames[0].depth, frames[1].depth, frames[0].seg, frames[1].seg,
                                          cur_from_prev, spec.camera, kSemanticIouThreshold, kGeometricRankFraction);
  std::size_t masked = 0;
  for (double m : pm.combined.values()) masked += m == 0.0;
  ASSERT_GT(masked, 0u);
  // probe: only L_g and L_d, with W_s held at zero so L_p carries no gradient
  LossWeights lw;
  lw.lambda_s = 0.0;
  const ScalarMap zero_ws(spec.camera.width, spec.camera.height, 0.0);
  DepthMap dense = frames[1].depth;
  for (auto& d : dense.values()) d *= 1.1;
  const PairView view{frames[0].image, frames[1].image, frames[0].depth, frames[1].depth, cur_from_prev.inverse(),
                      dense, pm.combined, &zero_ws};
  const PairLoss pl = pair_loss(view, spec.camera, lw);
  std::size_t nonzero_kept = 0;
  for (std::size_t i = 0; i < pm.combined.size(); ++i) {
    if (pm.combined[i] == 0.0) {
      EXPECT_EQ(pl.grad_cur[i], 0.0);
    } else {
      nonzero_kept += pl.grad_cur[i] != 0.0;
    }
  }
  EXPECT_GT(nonzero_kept, 0u);
}

TEST(RunOnline, FrozenBaseAndDeterminism) {
  const SmallRun s = small_run();
  AdaptConfig cfg = s.fixture.config;
  const auto a = run_online(s.fixture.stream, s.net, cfg);
  const auto b = run_online(s.fixture.stream, s.net, cfg);
  ASSERT_EQ(a.log.size(), 6u);
  for (std::size_t l = 0; l < s.net.layers().size(); ++l) {
    EXPECT_EQ(a.net.layers()[l].weight, s.net.layers()[l].weight);
    EXPECT_EQ(a.net.layers()[l].bias, s.net.layers()[l].bias);
  }
  EXPECT_NE(a.net.refiner_parameters(), s.net.refiner_parameters());
  EXPECT_EQ(a.net.refiner_parameters(), b.net.refiner_parameters());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].loss.l_total, b.log[i].loss.l_total);
    EXPECT_EQ(a.log[i].lr, cfg.lr.at(static_cast<std::int64_t>(i)));
  }
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_TRUE(same_pose(a.trajectory[i].pose, b.trajectory[i].pose));
  }
}

TEST(RunOnline, MaxStepsCapsLearning) {
  const SmallRun s = small_run();
  AdaptConfig cfg = s.fixture.config;
  cfg.max_steps = 2;
  const auto r = run_online(s.fixture.stream, s.net, cfg);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.trajectory.size(), s.fixture.stream.frames.size());
}

TEST(RunOnline, NoLearningMatchesPoseSolverOnFrozenDepth) {
  const SmallRun s = small_run();
  AdaptConfig cfg = s.fixture.config;
  cfg.learning = false;
  const auto r = run_online(s.fixture.stream, s.net, cfg);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.net.refiner_parameters(), s.net.refiner_parameters());

  // the same tracking written out directly
  const auto& st = s.fixture.stream;
  const auto& K = st.camera;
  Pose world_from_cam = Pose::identity();
  Pose motion = Pose::identity();
  MaskMap prev_mask;
  ASSERT_EQ(r.trajectory.size(), st.frames.size());
  for (std::size_t i = 1; i < st.frames.size(); ++i) {
    const DepthMap dp = s.net.predict_depth(st.frames[i - 1].image);
    const DepthMap dc = s.net.predict_depth(st.frames[i].image);
    std::vector<Vec2> pa;
    for (const auto& m : st.matches[i - 1].matches) pa.push_back(m.pixel_a);
    const auto pts = init_map_points(dp, pa, Pose::identity(), K, prev_mask.empty() ? nullptr : &prev_mask);
    std::vector<Vec2> obs;
    for (const auto& p : pts) obs.push_back(st.matches[i - 1].matches[p.source].pixel_b);
    motion = solve_pose(pts, obs, motion, K, cfg.solver).pose;
    world_from_cam = (world_from_cam * motion.inverse()).normalized();
    prev_mask = compute_pair_masks(dp, dc, st.frames[i - 1].seg, st.frames[i].seg, motion, K, cfg.tau_s,
                                   cfg.mgc_fraction)
                    .combined;
    EXPECT_TRUE(same_pose(r.trajectory[i].pose, world_from_cam)) << i;
  }
}

TEST(RunOnline, SourceDomainStreamKeepsAccuracy) {
  const SmallRun s = small_run(9, false);
  const double before = mean_abs_rel(s.net, s.fixture.target_frames);
  AdaptConfig cfg;  // default schedule on an unshifted stream
  const auto r = run_online(s.fixture.stream, s.net, cfg);
  const double after = mean_abs_rel(r.net, s.fixture.target_frames);
  EXPECT_LE(std::abs(after - before), 0.1 * before) << before << " -> " << after;
  EXPECT_EQ(r.stop_step, -1);  // far below the minimum step count
}

TEST(RunOnline, RejectsShortStreams) {
  FrameStream st;
  st.camera = {30.0, 30.0, 29.5, 19.5, 60, 40};
  st.frames.resize(1);
  EXPECT_THROW(run_online(st, ToyDepthNet::create(NetConfig{}), AdaptConfig{}), EmptyInputError);
  st.frames.resize(3);
  st.matches.resize(1);
  EXPECT_THROW(run_online(st, ToyDepthNet::create(NetConfig{}), AdaptConfig{}), DimensionMismatchError);
}

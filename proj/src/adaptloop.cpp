#include "adaptvo/adaptloop.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace adaptvo {

double LrSchedule::at(std::int64_t step) const {
  if (step < 0) throw std::invalid_argument("step must be non-negative");
  if (every <= 0) return base;
  return base * std::pow(decay, static_cast<double>(step / every));
}

double lr_at(std::int64_t step) { return LrSchedule{}.at(step); }

// ---------------------------------------------------------------------------
// StopState

StopState::StopState(const StopConfig& config) : config_(config) {
  if (config.window < 2) throw std::invalid_argument("stop window must hold at least two values");
  if (!(config.smoothing >= 0.0 && config.smoothing < 1.0)) throw std::invalid_argument("smoothing must lie in [0, 1)");
}

bool StopState::update(double loss) {
  const double a = config_.smoothing;
  if (steps_ == 0) {
    ema_ = loss;
    sq_ema_ = 0.0;
  } else {
    const double dev = loss - ema_;
    sq_ema_ = a * sq_ema_ + (1.0 - a) * dev * dev;
    ema_ = a * ema_ + (1.0 - a) * loss;
  }
  ++steps_;
  window_.push_back(ema_);
  if (window_.size() > static_cast<std::size_t>(config_.window)) window_.pop_front();
  const bool full = window_.size() == static_cast<std::size_t>(config_.window);
  if (!stopped_ && steps_ >= config_.min_steps && full && variance() < config_.tau) stopped_ = true;
  return stopped_;
}

double StopState::variance() const {
  if (config_.mode == VarianceMode::kEmaSquaredDeviation) return sq_ema_;
  if (window_.size() < 2) return 0.0;
  double mean = 0.0;
  for (const double x : window_) mean += x;
  mean /= static_cast<double>(window_.size());
  double ss = 0.0;
  for (const double x : window_) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(window_.size() - 1);
}

// ---------------------------------------------------------------------------
// config

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

AdaptConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.what(), e.byte);
  }
  AdaptConfig c;
  try {
    static const std::vector<std::string> known = {"stop",   "loss",       "lr",          "adam",     "grid_divisions",
                                                   "solver", "tau_s",      "mgc_fraction", "batch_pairs", "learning",
                                                   "mask_pose_points", "max_steps"};
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) throw FormatError("unknown config key '" + key + "'", 0);
    }
    if (j.contains("stop")) {
      const auto& s = j.at("stop");
      read_opt(s, "min_steps", c.stop.min_steps);
      read_opt(s, "window", c.stop.window);
      read_opt(s, "tau", c.stop.tau);
      read_opt(s, "smoothing", c.stop.smoothing);
      if (s.contains("variance")) {
        const auto mode = s.at("variance").get<std::string>();
        if (mode == "smoothed_window") {
          c.stop.mode = VarianceMode::kSmoothedWindow;
        } else if (mode == "ema_squared_deviation") {
          c.stop.mode = VarianceMode::kEmaSquaredDeviation;
        } else {
          throw FormatError("unknown variance mode '" + mode + "'", 0);
        }
      }
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      read_opt(l, "alpha", c.loss.alpha);
      read_opt(l, "lambda_s", c.loss.lambda_s);
      read_opt(l, "lambda_g", c.loss.lambda_g);
      read_opt(l, "lambda_d", c.loss.lambda_d);
      read_opt(l, "attach_ws", c.loss.attach_ws);
    }
    if (j.contains("lr")) {
      const auto& l = j.at("lr");
      read_opt(l, "base", c.lr.base);
      read_opt(l, "decay", c.lr.decay);
      read_opt(l, "every", c.lr.every);
    }
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      read_opt(a, "beta1", c.adam.beta1);
      read_opt(a, "beta2", c.adam.beta2);
      read_opt(a, "epsilon", c.adam.epsilon);
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      read_opt(s, "huber_delta", c.solver.huber_delta);
      read_opt(s, "max_iterations", c.solver.max_iterations);
    }
    read_opt(j, "grid_divisions", c.grid.divisions);
    read_opt(j, "tau_s", c.tau_s);
    read_opt(j, "mgc_fraction", c.mgc_fraction);
    read_opt(j, "batch_pairs", c.batch_pairs);
    read_opt(j, "learning", c.learning);
    read_opt(j, "mask_pose_points", c.mask_pose_points);
    read_opt(j, "max_steps", c.max_steps);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what(), 0);
  }
  if (c.batch_pairs == 0) throw FormatError("batch_pairs must be positive", 0);
  return c;
}

AdaptConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const AdaptConfig& c) {
  nlohmann::ordered_json j;
  j["stop"] = {{"min_steps", c.stop.min_steps},
               {"window", c.stop.window},
               {"tau", c.stop.tau},
               {"smoothing", c.stop.smoothing},
               {"variance", c.stop.mode == VarianceMode::kSmoothedWindow ? "smoothed_window" : "ema_squared_deviation"}};
  j["loss"] = {{"alpha", c.loss.alpha},
               {"lambda_s", c.loss.lambda_s},
               {"lambda_g", c.loss.lambda_g},
               {"lambda_d", c.loss.lambda_d},
               {"attach_ws", c.loss.attach_ws}};
  j["lr"] = {{"base", c.lr.base}, {"decay", c.lr.decay}, {"every", c.lr.every}};
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
  j["solver"] = {{"huber_delta", c.solver.huber_delta}, {"max_iterations", c.solver.max_iterations}};
  j["grid_divisions"] = c.grid.divisions;
  j["tau_s"] = c.tau_s;
  j["mgc_fraction"] = c.mgc_fraction;
  j["batch_pairs"] = c.batch_pairs;
  j["learning"] = c.learning;
  j["mask_pose_points"] = c.mask_pose_points;
  j["max_steps"] = c.max_steps;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// loop

PairMasks compute_pair_masks(const DepthMap& depth_prev, const DepthMap& depth_cur, const SegMap& seg_prev,
                             const SegMap& seg_cur, const Pose& cur_from_prev, const CameraIntrinsics& K,
                             double tau_s, double fraction) {
  const Pose prev_from_cur = cur_from_prev.inverse();
  const ProjectedDepths proj = project_depths(depth_cur, depth_prev, prev_from_cur, K);
  PairMasks m;
  m.ws = compute_ws(proj.interpolated, proj.projected);
  m.semantic = compute_msc(extract_regions(seg_cur, 1), extract_regions(seg_prev, 0), depth_cur, prev_from_cur, K,
                           tau_s);
  m.geometric = compute_mgc(m.ws.weights, m.ws.valid, fraction);
  m.combined = compose_mask(m.semantic, m.geometric);
  return m;
}

namespace {

struct PairRecord {
  std::size_t index = 0;  // frame index of the later frame
  Pose prev_from_cur;
  DepthMap dense;
  MaskMap mask;
};

LossBreakdown mean_breakdown(const std::vector<LossBreakdown>& parts) {
  LossBreakdown out;
  for (const auto& p : parts) {
    out.l_p += p.l_p;
    out.l_s += p.l_s;
    out.l_g += p.l_g;
    out.l_d += p.l_d;
    out.l_total += p.l_total;
    out.n_p += p.n_p;
    out.n_g += p.n_g;
    out.n_d += p.n_d;
  }
  const auto n = static_cast<double>(parts.size());
  out.l_p /= n;
  out.l_s /= n;
  out.l_g /= n;
  out.l_d /= n;
  out.l_total /= n;
  return out;
}

}  // namespace

AdaptResult run_online(const FrameStream& stream, ToyDepthNet net, const AdaptConfig& config) {
  const auto& frames = stream.frames;
  const CameraIntrinsics& K = stream.camera;
  K.validate();
  if (frames.size() < 2) throw EmptyInputError("online adaptation needs at least two frames");
  if (stream.matches.size() + 1 < frames.size()) throw DimensionMismatchError("missing correspondences for a frame pair");

  AdaptResult result;
  StopState stop(config.stop);
  AdamState adam;
  Eigen::VectorXd params = net.refiner_parameters();
  std::deque<PairRecord> recent;
  std::vector<MaskMap> masks(frames.size());  // combined mask of pair (i-1, i), on frame i
  std::optional<Pose> motion;                 // last cur_from_prev
  Pose world_from_cam = Pose::identity();
  result.trajectory.push_back({frames[0].timestamp, world_from_cam});
  std::int64_t step = 0;
  // last frame's prediction, reusable while the net is unchanged
  DepthMap carried;
  std::uint64_t carried_version = 0;

  for (std::size_t i = 1; i < frames.size(); ++i) {
    const StreamFrame& prev = frames[i - 1];
    const StreamFrame& cur = frames[i];
    const CorrespondenceSet& corr = stream.matches[i - 1];
    const bool budget_left = config.max_steps < 0 || step < config.max_steps;
    const bool learn_now = config.learning && !stop.stopped() && budget_left;

    // when this pair will be learned from, its taped forwards serve tracking too
    std::map<std::size_t, RecordedDepth> recorded;
    DepthMap depth_prev, depth_cur;
    if (learn_now) {
      for (const std::size_t f : {i - 1, i}) recorded.emplace(f, net.predict_depth_recorded(frames[f].image));
      depth_prev = recorded.at(i - 1).depth;
      depth_cur = recorded.at(i).depth;
    } else {
      depth_prev = !carried.empty() && carried_version == net.version() ? carried : net.predict_depth(prev.image);
      depth_cur = net.predict_depth(cur.image);
    }
    carried = depth_cur;
    carried_version = net.version();

    PairEvent event;
    event.frame = cur.id;
    Pose cur_from_prev = motion.value_or(Pose::identity());
    try {
      std::vector<Vec2> pixels_a;
      pixels_a.reserve(corr.matches.size());
      for (const auto& m : corr.matches) pixels_a.push_back(m.pixel_a);
      const MaskMap* pose_mask = config.mask_pose_points && !masks[i - 1].empty() ? &masks[i - 1] : nullptr;
      const auto points = init_map_points(depth_prev, pixels_a, Pose::identity(), K, pose_mask, prev.id);
      std::vector<Vec2> observations;
      observations.reserve(points.size());
      for (const auto& p : points) observations.push_back(corr.matches[p.source].pixel_b);
      const PoseSolveReport report = solve_pose(points, observations, cur_from_prev, K, config.solver);
      cur_from_prev = report.pose;
      event.iterations = report.iterations;
      event.cost = report.final_cost;
      if (!report.converged) event.note = "pose solve hit the iteration limit";
    } catch (const Error& e) {
      event.pose_ok = false;
      event.note = std::string("pose solve failed, motion model used: ") + e.what();
    }
    motion = cur_from_prev;
    world_from_cam = (world_from_cam * cur_from_prev.inverse()).normalized();
    result.trajectory.push_back({cur.timestamp, world_from_cam});

    PairMasks pm = compute_pair_masks(depth_prev, depth_cur, prev.seg, cur.seg, cur_from_prev, K, config.tau_s,
                                      config.mgc_fraction);
    masks[i] = pm.combined;

    DepthMap dense(K.width, K.height, 0.0);
    if (event.pose_ok) {
      try {
        const SparseDepthBuild sparse = build_sparse_depth(corr, cur_from_prev, K);
        dense = densify(sparse.sparse, cur.seg, config.grid, &pm.semantic);
      } catch (const EmptyInputError& e) {
        event.note += std::string(event.note.empty() ? "" : "; ") + "no densified depth: " + e.what();
      }
    }
    result.events.push_back(event);
    if (!event.pose_ok) continue;

    recent.push_back({i, cur_from_prev.inverse(), std::move(dense), std::move(pm.combined)});
    if (recent.size() > config.batch_pairs) recent.pop_front();

    if (!learn_now) continue;

    // forward every frame of the batch once with a tape
    for (const auto& r : recent) {
      for (const std::size_t f : {r.index - 1, r.index}) {
        if (!recorded.contains(f)) recorded.emplace(f, net.predict_depth_recorded(frames[f].image));
      }
    }
    std::map<std::size_t, DepthMap> grads;
    for (const auto& [f, rd] : recorded) grads.emplace(f, DepthMap(K.width, K.height, 0.0));
    std::vector<LossBreakdown> parts;
    const double inv_batch = 1.0 / static_cast<double>(recent.size());
    for (const auto& r : recent) {
      const PairView view{frames[r.index - 1].image, frames[r.index].image, recorded.at(r.index - 1).depth,
                          recorded.at(r.index).depth, r.prev_from_cur,       r.dense,
                          r.mask};
      const PairLoss pl = pair_loss(view, K, config.loss, true);
      parts.push_back(pl.breakdown);
      auto& gp = grads.at(r.index - 1);
      auto& gc = grads.at(r.index);
      for (std::size_t k = 0; k < gc.size(); ++k) {
        gc[k] += inv_batch * pl.grad_cur[k];
        gp[k] += inv_batch * pl.grad_prev[k];
      }
    }
    Eigen::VectorXd total = Eigen::VectorXd::Zero(params.size());
    for (auto& [f, rd] : recorded) total += net.flatten(rd.tape.backprop_depth(grads.at(f)));

    const double lr = config.lr.at(step);
    adam_step(params, total, adam, lr, config.adam);
    net.set_refiner_parameters(params);

    StepLog entry;
    entry.step = static_cast<int>(step);
    entry.frame = cur.id;
    entry.lr = lr;
    entry.loss = mean_breakdown(parts);
    entry.stopped = stop.update(entry.loss.l_total);
    if (entry.stopped && result.stop_step < 0) result.stop_step = static_cast<int>(stop.steps());
    result.log.push_back(entry);
    ++step;
  }
  result.net = std::move(net);
  return result;
}

}  // namespace adaptvo

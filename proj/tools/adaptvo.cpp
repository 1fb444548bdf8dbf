#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adaptvo/adaptloop.hpp"
#include "adaptvo/dce.hpp"
#include "adaptvo/io.hpp"
#include "adaptvo/metrics.hpp"
#include "adaptvo/oracle.hpp"
#include "adaptvo/sdd.hpp"
#include "adaptvo/synthworld.hpp"

namespace fs = std::filesystem;
using namespace adaptvo;

namespace {

void report(const std::string& key, double value) { std::cout << key << " = " << io::format_report(value) << '\n'; }
void report(const std::string& key, std::int64_t value) { std::cout << key << " = " << value << '\n'; }

// --- synth --------------------------------------------------------------

struct SynthSpec {
  SceneSpec scene;
  StreamOptions stream;
};

template <typename T>
void opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DomainShift parse_shift(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "default") return default_shift();
    if (name == "none") return {};
    throw FormatError("unknown shift '" + name + "'", 0);
  }
  DomainShift s;
  opt(j, "gamma", s.gamma);
  opt(j, "depth_scale", s.depth_scale);
  opt(j, "palette", s.palette);
  return s;
}

SynthSpec parse_synth_spec(const fs::path& path, std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
  SynthSpec out;
  try {
    const std::string kind = j.value("scene", std::string("room"));
    if (kind == "room") {
      RoomOptions o;
      opt(j, "seed", o.seed);
      opt(j, "width", o.width);
      opt(j, "height", o.height);
      opt(j, "focal", o.focal);
      opt(j, "size", o.size);
      opt(j, "frames", o.frames);
      opt(j, "boxes", o.boxes);
      opt(j, "step", o.step);
      if (j.contains("shift")) o.shift = parse_shift(j.at("shift"));
      if (seed) o.seed = *seed;
      out.scene = make_room_scene(o);
    } else if (kind == "moving_box") {
      MovingBoxOptions o;
      opt(j, "seed", o.seed);
      opt(j, "width", o.width);
      opt(j, "height", o.height);
      opt(j, "frames", o.frames);
      if (j.contains("velocity")) {
        const auto v = j.at("velocity").get<std::vector<double>>();
        if (v.size() != 3) throw FormatError(path.string() + ": velocity needs 3 components", 0);
        o.velocity = Vec3(v[0], v[1], v[2]);
      }
      if (seed) o.seed = *seed;
      out.scene = make_moving_box_scene(o);
      if (j.contains("shift")) out.scene.shift = parse_shift(j.at("shift"));
    } else {
      throw FormatError(path.string() + ": unknown scene kind '" + kind + "'", 0);
    }
    opt(j, "texture_amplitude", out.scene.texture_amplitude);
    opt(j, "matches", out.stream.matches);
    opt(j, "match_sigma", out.stream.sigma);
    opt(j, "match_seed", out.stream.seed);
    opt(j, "frame_interval", out.stream.frame_interval);
    if (j.value("match_mode", std::string("static")) == "all") out.stream.mode = CorrespondenceMode::kAllPixels;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
  return out;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  const SynthSpec spec = parse_synth_spec(spec_path, seed);
  const auto frames = generate(spec.scene);
  io::FrameDirectory fd;
  fd.stream = make_stream(spec.scene, frames, spec.stream);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    fd.depths.push_back(frames[i].depth);
    fd.truth.push_back({fd.stream.frames[i].timestamp, frames[i].world_from_camera});
  }
  io::write_frame_dir(out, fd);
  report("frames", static_cast<std::int64_t>(frames.size()));
  report("width", static_cast<std::int64_t>(spec.scene.camera.width));
  report("height", static_cast<std::int64_t>(spec.scene.camera.height));
  return 0;
}

// --- pretrain -----------------------------------------------------------

int cmd_pretrain(const fs::path& scenes, const fs::path& out, int stride, double ridge, int epochs,
                 std::optional<std::uint64_t> seed) {
  std::vector<fs::path> dirs;
  if (fs::exists(scenes / "frames.txt")) {
    dirs.push_back(scenes);
  } else {
    for (const auto& entry : fs::directory_iterator(scenes))
      if (entry.is_directory() && fs::exists(entry.path() / "frames.txt")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw EmptyInputError("no frame directories under " + scenes.string());
  if (stride < 1) throw std::invalid_argument("--stride must be >= 1");
  std::vector<DepthSupervision> samples;
  for (const auto& dir : dirs) {
    auto fd = io::load_frame_dir(dir);
    if (fd.depths.empty()) throw EmptyInputError(dir.string() + " has no ground-truth depth");
    for (std::size_t i = 0; i < fd.depths.size(); i += static_cast<std::size_t>(stride))
      samples.push_back({fd.stream.frames[i].image, fd.depths[i]});
  }
  PretrainOptions po;
  po.ridge = ridge;
  po.epochs = epochs;
  if (seed) {
    po.net.seed = *seed;
    po.seed = *seed;
  }
  const PretrainResult result = pretrain_toy_net(samples, po);
  io::write_file(out, [&](std::ostream& os) { io::write_net(os, result.net); });
  double abs_rel = 0.0;
  for (const auto& s : samples) abs_rel += aligned_depth_metrics(result.net.predict_depth(s.image), s.depth).abs_rel;
  report("scenes", static_cast<std::int64_t>(dirs.size()));
  report("frames", static_cast<std::int64_t>(samples.size()));
  report("abs_rel", abs_rel / static_cast<double>(samples.size()));
  report("trainable_parameters", static_cast<std::int64_t>(result.net.trainable_parameter_count()));
  report("frozen_parameters", static_cast<std::int64_t>(result.net.frozen_parameter_count()));
  return 0;
}

// --- adapt --------------------------------------------------------------

double frames_abs_rel(const ToyDepthNet& net, const io::FrameDirectory& fd) {
  double sum = 0.0;
  for (std::size_t i = 0; i < fd.depths.size(); ++i)
    sum += aligned_depth_metrics(net.predict_depth(fd.stream.frames[i].image), fd.depths[i]).abs_rel;
  return sum / static_cast<double>(fd.depths.size());
}

int cmd_adapt(const fs::path& frames, const fs::path& net_path, const std::string& config_path, const fs::path& out,
              bool no_learning) {
  const io::FrameDirectory fd = io::load_frame_dir(frames);
  const ToyDepthNet net = io::load_net(net_path);
  AdaptConfig config = config_path.empty() ? AdaptConfig{} : load_config(config_path);
  if (no_learning) config.learning = false;

  const AdaptResult result = run_online(fd.stream, net, config);

  fs::create_directories(out);
  io::write_file(out / "losses.csv", [&](std::ostream& os) {
    io::write_loss_header(os);
    for (const auto& s : result.log) io::write_loss_row(os, s.step, s.loss);
  });
  io::write_file(out / "trajectory.tum", [&](std::ostream& os) { io::write_tum(os, result.trajectory); });
  io::write_file(out / "net.bin", [&](std::ostream& os) { io::write_net(os, result.net); });
  io::write_file(out / "events.txt", [&](std::ostream& os) {
    for (const auto& e : result.events)
      os << e.frame << ' ' << (e.pose_ok ? "ok" : "failed") << ' ' << e.iterations << ' '
         << io::format_double(e.cost) << (e.note.empty() ? "" : " " + e.note) << '\n';
  });
  io::write_file(out / "config.json", [&](std::ostream& os) { os << dump_config(config) << '\n'; });

  std::int64_t failures = 0;
  for (const auto& e : result.events) failures += e.pose_ok ? 0 : 1;
  report("learning", static_cast<std::int64_t>(config.learning ? 1 : 0));
  report("steps", static_cast<std::int64_t>(result.log.size()));
  report("stop_step", static_cast<std::int64_t>(result.stop_step));
  report("pose_failures", failures);
  if (!result.log.empty()) report("final_loss", result.log.back().loss.l_total);
  if (!fd.depths.empty()) {
    report("abs_rel_initial", frames_abs_rel(net, fd));
    report("abs_rel_final", frames_abs_rel(result.net, fd));
  }
  if (!fd.truth.empty()) report("ate_rmse", trajectory_metrics(result.trajectory, fd.truth).ate_rmse);
  return 0;
}

// --- densify / mask -----------------------------------------------------

int cmd_densify(const fs::path& sparse_path, const fs::path& seg_path, const std::string& mask_path,
                const fs::path& out, int divisions) {
  const SparseDepth sparse = io::load_sparse(sparse_path);
  SegMap seg;
  seg.labels = io::load_labels(seg_path);
  std::optional<MaskMap> mask;
  if (!mask_path.empty()) mask = io::load_mask(mask_path);
  GridSpec grid;
  grid.divisions = divisions;
  const DepthMap dense = densify(sparse, seg, grid, mask ? &*mask : nullptr);
  io::write_file(out, [&](std::ostream& os) { io::write_depth(os, dense); });
  std::int64_t valid = 0;
  for (double d : dense.values()) valid += d > 0.0 ? 1 : 0;
  report("samples", static_cast<std::int64_t>(sparse.samples.size()));
  report("valid_pixels", valid);
  return 0;
}

int cmd_mask(const fs::path& frames, const fs::path& pose_path, const std::string& net_path, const fs::path& out,
             double tau_s, double fraction) {
  const io::FrameDirectory fd = io::load_frame_dir(frames);
  const Trajectory poses = io::load_tum(pose_path);
  const auto& stream = fd.stream;
  if (poses.size() != stream.frames.size()) throw DimensionMismatchError("pose file needs one pose per frame");
  std::vector<DepthMap> depths;
  if (!net_path.empty()) {
    const ToyDepthNet net = io::load_net(net_path);
    for (const auto& f : stream.frames) depths.push_back(net.predict_depth(f.image));
  } else if (!fd.depths.empty()) {
    depths = fd.depths;
  } else {
    throw EmptyInputError("no depth: pass --net or provide frame_<id>.dpf files");
  }
  fs::create_directories(out);
  for (std::size_t i = 1; i < stream.frames.size(); ++i) {
    const Pose cur_from_prev = poses[i].pose.inverse() * poses[i - 1].pose;
    const PairMasks m = compute_pair_masks(depths[i - 1], depths[i], stream.frames[i - 1].seg, stream.frames[i].seg,
                                           cur_from_prev, stream.camera, tau_s, fraction);
    const std::string stem = io::frame_stem(stream.frames[i].id);
    io::write_file(out / ("mask_" + stem + ".msk"), [&](std::ostream& os) { io::write_mask(os, m.combined); });
    io::write_file(out / ("ws_" + stem + ".msk"), [&](std::ostream& os) { io::write_mask(os, m.ws.weights); });
    io::write_file(out / ("msc_" + stem + ".msk"), [&](std::ostream& os) { io::write_mask(os, m.semantic); });
    io::write_file(out / ("mgc_" + stem + ".msk"), [&](std::ostream& os) { io::write_mask(os, m.geometric); });
    std::size_t excluded = 0;
    for (double v : m.combined.values()) excluded += v == 0.0 ? 1 : 0;
    report("frame_" + stem + "_excluded", static_cast<double>(excluded) / static_cast<double>(m.combined.size()));
  }
  return 0;
}

// --- eval ---------------------------------------------------------------

std::vector<std::pair<fs::path, fs::path>> depth_pairs(const fs::path& pred, const fs::path& gt) {
  if (!fs::is_directory(pred)) return {{pred, gt}};
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& entry : fs::directory_iterator(gt)) {
    if (entry.path().extension() != ".dpf") continue;
    const fs::path p = pred / entry.path().filename();
    if (!fs::exists(p)) throw Error("missing prediction " + p.string());
    pairs.emplace_back(p, entry.path());
  }
  std::sort(pairs.begin(), pairs.end());
  if (pairs.empty()) throw EmptyInputError("no .dpf files in " + gt.string());
  return pairs;
}

int cmd_eval_depth(const fs::path& pred, const fs::path& gt, bool no_align, double cap) {
  DepthMetrics sum;
  const auto pairs = depth_pairs(pred, gt);
  for (const auto& [p, g] : pairs) {
    const DepthMap dp = io::load_depth(p);
    const DepthMap dg = io::load_depth(g);
    const DepthMetrics m = no_align ? depth_metrics(dp, dg, cap) : aligned_depth_metrics(dp, dg, cap);
    sum.abs_rel += m.abs_rel;
    sum.sq_rel += m.sq_rel;
    sum.rmse += m.rmse;
    sum.delta1 += m.delta1;
    sum.delta2 += m.delta2;
    sum.delta3 += m.delta3;
    sum.count += m.count;
  }
  const double n = static_cast<double>(pairs.size());
  report("abs_rel", sum.abs_rel / n);
  report("sq_rel", sum.sq_rel / n);
  report("rmse", sum.rmse / n);
  report("delta1", sum.delta1 / n);
  report("delta2", sum.delta2 / n);
  report("delta3", sum.delta3 / n);
  report("pixels", static_cast<std::int64_t>(sum.count));
  return 0;
}

int cmd_eval_traj(const fs::path& pred, const fs::path& gt) {
  const TrajectoryMetrics m = trajectory_metrics(io::load_tum(pred), io::load_tum(gt));
  report("ate_rmse", m.ate_rmse);
  report("t_rel", m.t_rel);
  report("r_rel", m.r_rel);
  report("segments", static_cast<std::int64_t>(m.segments));
  return 0;
}

// --- self checks --------------------------------------------------------

constexpr double kGradcheckTolerance = 1e-5;

int cmd_gradcheck(std::uint64_t seed, int seeds) {
  const auto r = oracle::run_gradcheck_suite(seed, seeds);
  report("seeds", static_cast<std::int64_t>(r.seeds));
  report("parameters", static_cast<std::int64_t>(r.parameters));
  report("max_relative_error", r.max_relative_error);
  return r.max_relative_error <= kGradcheckTolerance ? 0 : 1;
}

int cmd_oracle_densify(std::uint64_t seed, int cases) {
  const auto r = oracle::run_densify_suite(seed, cases);
  report("cases", static_cast<std::int64_t>(r.cases));
  report("identical", static_cast<std::int64_t>(r.identical));
  report("with_fallback", static_cast<std::int64_t>(r.with_fallback));
  report("with_empty_fill", static_cast<std::int64_t>(r.with_empty_fill));
  return r.identical == r.cases && r.with_fallback > 0 && r.with_empty_fill > 0 ? 0 : 1;
}

int cmd_oracle_triangulate(std::uint64_t seed, int cases) {
  const auto r = oracle::run_triangulation_suite(seed, cases);
  report("cases", static_cast<std::int64_t>(r.cases));
  report("max_error", r.max_error);
  report("max_oracle_gap", r.max_oracle_gap);
  report("max_scaling_error", r.max_scaling_error);
  report("parallel_detected", static_cast<std::int64_t>(r.parallel_detected));
  report("cheirality_detected", static_cast<std::int64_t>(r.cheirality_detected));
  const bool ok = r.max_error < 1e-9 && r.max_scaling_error <= 1e-12 && r.parallel_detected && r.cheirality_detected;
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online depth adaptation for pseudo RGB-D visual odometry"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  int threads = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--threads", threads, "Worker cap (computation is sequential)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for every random choice");

  fs::path spec_path, out, scenes, frames, net_path, sparse_path, seg_path, pose_path, pred, gt;
  std::string config_path, mask_path, mask_net;
  int stride = 2, epochs = 0, divisions = 20, seeds = 24, cases = 100;
  double ridge = 1e-3, tau_s = kSemanticIouThreshold, fraction = kGeometricRankFraction, cap = kDepthCap;
  bool no_learning = false, no_align = false;

  auto* synth = app.add_subcommand("synth", "Render a scene spec into a frame directory");
  synth->add_option("--spec", spec_path, "Scene spec (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "Fit the source-domain toy net on rendered frames");
  pretrain->add_option("--scenes", scenes, "Frame directory or a directory of them")->required()->check(CLI::ExistingDirectory);
  pretrain->add_option("--out", out, "Net file")->required();
  pretrain->add_option("--stride", stride, "Use every n-th frame");
  pretrain->add_option("--ridge", ridge, "Ridge weight of the output fit");
  pretrain->add_option("--epochs", epochs, "Adam epochs after the ridge fit");

  auto* adapt = app.add_subcommand("adapt", "Run online adaptation over a frame directory");
  adapt->add_option("--frames", frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
  adapt->add_option("--net", net_path, "Net file")->required()->check(CLI::ExistingFile);
  adapt->add_option("--config", config_path, "Adaptation config (JSON)")->check(CLI::ExistingFile);
  adapt->add_option("--out", out, "Output directory")->required();
  adapt->add_flag("--no-learning", no_learning, "Track only, never update the refiners");

  auto* dens = app.add_subcommand("densify", "Densify sparse depth with a segmentation");
  dens->add_option("--sparse", sparse_path, "Sparse depth text file")->required()->check(CLI::ExistingFile);
  dens->add_option("--seg", seg_path, "SEG1 label file")->required()->check(CLI::ExistingFile);
  dens->add_option("--mask", mask_path, "MSK1 dynamic mask")->check(CLI::ExistingFile);
  dens->add_option("--grid", divisions, "Cells per axis")->check(CLI::PositiveNumber);
  dens->add_option("--out", out, "DPF1 output")->required();

  auto* mask = app.add_subcommand("mask", "Dynamic masks for consecutive frame pairs");
  mask->add_option("--frames", frames, "Frame directory")->required()->check(CLI::ExistingDirectory);
  mask->add_option("--pose", pose_path, "TUM trajectory, one pose per frame")->required()->check(CLI::ExistingFile);
  mask->add_option("--net", mask_net, "Predict depth with this net instead of the stored depth")->check(CLI::ExistingFile);
  mask->add_option("--tau-s", tau_s, "IoU threshold");
  mask->add_option("--fraction", fraction, "Share of pixels removed by the geometric mask");
  mask->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Depth or trajectory metrics");
  eval->require_subcommand(1);
  auto* eval_depth = eval->add_subcommand("depth", "Depth metrics for DPF1 files or directories");
  eval_depth->add_option("--pred", pred)->required()->check(CLI::ExistingPath);
  eval_depth->add_option("--gt", gt)->required()->check(CLI::ExistingPath);
  eval_depth->add_flag("--no-align", no_align, "Skip mean-ratio scale alignment");
  eval_depth->add_option("--cap", cap, "Ignore ground truth beyond this depth");
  auto* eval_traj = eval->add_subcommand("traj", "ATE and relative drift for TUM files");
  eval_traj->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
  eval_traj->add_option("--gt", gt)->required()->check(CLI::ExistingFile);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the refiner gradients");
  grad->add_option("--seeds", seeds, "Number of configurations")->check(CLI::PositiveNumber);

  auto* orc = app.add_subcommand("oracle", "Brute-force equivalence suites");
  orc->require_subcommand(1);
  auto* orc_densify = orc->add_subcommand("densify", "Densification against the quadratic reference");
  auto* orc_tri = orc->add_subcommand("triangulate", "Triangulation against the linear reference");
  for (auto* c : {orc_densify, orc_tri}) c->add_option("--cases", cases, "Number of cases")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    const std::uint64_t s = seed.value_or(1);
    if (synth->parsed()) return cmd_synth(spec_path, out, seed);
    if (pretrain->parsed()) return cmd_pretrain(scenes, out, stride, ridge, epochs, seed);
    if (adapt->parsed()) return cmd_adapt(frames, net_path, config_path, out, no_learning);
    if (dens->parsed()) return cmd_densify(sparse_path, seg_path, mask_path, out, divisions);
    if (mask->parsed()) return cmd_mask(frames, pose_path, mask_net, out, tau_s, fraction);
    if (eval_depth->parsed()) return cmd_eval_depth(pred, gt, no_align, cap);
    if (eval_traj->parsed()) return cmd_eval_traj(pred, gt);
    if (grad->parsed()) return cmd_gradcheck(s, seeds);
    if (orc_densify->parsed()) return cmd_oracle_densify(s, cases);
    if (orc_tri->parsed()) return cmd_oracle_triangulate(s, cases);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

#pragma once

// Closed-loop online adaptation: predict depth, track the camera on the
// pseudo depth, densify triangulated depth, build the dynamic masks, and
// update the refiners on a sliding batch until the stop controller fires.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "adaptvo/adam.hpp"
#include "adaptvo/dce.hpp"
#include "adaptvo/losses.hpp"
#include "adaptvo/metrics.hpp"
#include "adaptvo/posesolver.hpp"
#include "adaptvo/refinernet.hpp"
#include "adaptvo/sdd.hpp"
#include "adaptvo/sparsedepth.hpp"

namespace adaptvo {

struct LrSchedule {
  double base = 1e-4;
  double decay = 0.1;
  int every = 100;

  /// base * decay^floor(step / every)
  [[nodiscard]] double at(std::int64_t step) const;
};

double lr_at(std::int64_t step);

enum class VarianceMode {
  kSmoothedWindow,      // sample variance of the last L EMA-smoothed losses
  kEmaSquaredDeviation  // EMA of squared deviations from the running EMA
};

struct StopConfig {
  int min_steps = 300;  // N
  int window = 50;      // L
  double tau = 0.1;
  double smoothing = 0.6;  // weight on the previous smoothed value
  VarianceMode mode = VarianceMode::kSmoothedWindow;
};

class StopState {
 public:
  explicit StopState(const StopConfig& config = {});

  /// Feeds one raw loss; returns the (monotone) stop flag.
  bool update(double loss);

  [[nodiscard]] bool stopped() const noexcept { return stopped_; }
  [[nodiscard]] std::int64_t steps() const noexcept { return steps_; }
  [[nodiscard]] double ema() const noexcept { return ema_; }
  [[nodiscard]] double variance() const;
  [[nodiscard]] const std::deque<double>& window() const noexcept { return window_; }

 private:
  StopConfig config_;
  std::int64_t steps_ = 0;
  double ema_ = 0.0;
  double sq_ema_ = 0.0;
  std::deque<double> window_;
  bool stopped_ = false;
};

struct AdaptConfig {
  StopConfig stop;
  LossWeights loss;
  LrSchedule lr;
  AdamOptions adam;
  GridSpec grid;
  SolverOptions solver;
  double tau_s = kSemanticIouThreshold;
  double mgc_fraction = kGeometricRankFraction;
  std::size_t batch_pairs = 4;
  bool learning = true;
  bool mask_pose_points = true;  // drop map points with M = 0
  int max_steps = -1;            // learning steps cap, -1 = unlimited
};

AdaptConfig load_config(const std::filesystem::path& path);
AdaptConfig parse_config(const std::string& json_text);
std::string dump_config(const AdaptConfig& config);

struct StreamFrame {
  int id = 0;
  double timestamp = 0.0;
  Image image;
  SegMap seg;
};

struct FrameStream {
  CameraIntrinsics camera;
  std::vector<StreamFrame> frames;
  std::vector<CorrespondenceSet> matches;  // matches[i] pairs frame i with frame i + 1
};

struct StepLog {
  int step = 0;
  int frame = 0;
  double lr = 0.0;
  LossBreakdown loss;
  bool stopped = false;
};

struct PairEvent {
  int frame = 0;
  bool pose_ok = true;
  int iterations = 0;
  double cost = 0.0;
  std::string note;
};

struct PairMasks {
  SelfDiscoveredWeights ws;
  MaskMap semantic;
  MaskMap geometric;
  MaskMap combined;
};

/// Masks of frame t relative to frame t-1 from predicted depths.
PairMasks compute_pair_masks(const DepthMap& depth_prev, const DepthMap& depth_cur, const SegMap& seg_prev,
                             const SegMap& seg_cur, const Pose& cur_from_prev, const CameraIntrinsics& K,
                             double tau_s, double fraction);

struct AdaptResult {
  std::vector<StepLog> log;
  std::vector<PairEvent> events;
  Trajectory trajectory;  // world = first camera
  ToyDepthNet net;
  int stop_step = -1;  // number of learning steps taken when the controller fired
};

AdaptResult run_online(const FrameStream& stream, ToyDepthNet net, const AdaptConfig& config);

}  // namespace adaptvo

#pragma once

// Per-pixel toy depth predictor. Every dense layer computes
//   h = act(W0 x + B (A x) + bias)
// with W0/bias frozen and the low-rank pair (A, B) trainable.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adaptvo/geom.hpp"

namespace adaptvo {

enum class Activation : std::uint8_t { kTanh = 0, kIdentity = 1 };

struct LowRankRefiner {
  Eigen::MatrixXd a;  // r x k, Gaussian init
  Eigen::MatrixXd b;  // d x r, zero init

  [[nodiscard]] int rank() const noexcept { return static_cast<int>(a.rows()); }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // d x k
  Eigen::VectorXd bias;    // d
  Activation activation = Activation::kTanh;
  LowRankRefiner refiner;

  [[nodiscard]] int inputs() const noexcept { return static_cast<int>(weight.cols()); }
  [[nodiscard]] int outputs() const noexcept { return static_cast<int>(weight.rows()); }
};

/// 3x3 intensity patches on three dilated box-blur levels.
inline constexpr int kFeatureCount = 28;

struct NetConfig {
  std::vector<int> widths = {kFeatureCount, 480, 480, 1};
  int rank = 8;
  double refiner_init_std = 0.02;
  std::uint64_t seed = 1;
};

/// Feature-major matrix (kFeatureCount x pixels), pixels in raster order.
Eigen::MatrixXd extract_features(const Image& image);

/// Gradients for the refiner pairs, one entry per layer.
struct RefinerGradients {
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::MatrixXd> b;
};

/// Gradients for the frozen blocks; only produced on request (pre-training).
struct BaseGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

class ToyDepthNet;

/// Activations of one forward pass. Backpropagation consumes the tape; the
/// net must not change between recording and backprop.
class GradientTape {
 public:
  [[nodiscard]] const Eigen::RowVectorXd& output() const noexcept { return output_; }
  [[nodiscard]] bool consumed() const noexcept { return consumed_; }

  /// Reverse pass from dL/d(raw output). Throws TapeConsumedError on reuse.
  RefinerGradients backprop(const Eigen::RowVectorXd& output_seed, BaseGradients* base = nullptr);

  /// Reverse pass from dL/d(depth) for a tape recorded by predict_depth_recorded.
  RefinerGradients backprop_depth(const DepthMap& depth_gradient, BaseGradients* base = nullptr);

 private:
  friend class ToyDepthNet;

  struct LayerRecord {
    Eigen::MatrixXd input;      // k x P
    Eigen::MatrixXd projected;  // r x P, A x
    Eigen::MatrixXd output;     // d x P, post-activation
  };

  const ToyDepthNet* net_ = nullptr;
  std::uint64_t net_version_ = 0;
  std::vector<LayerRecord> layers_;
  Eigen::RowVectorXd output_;
  int width_ = 0;
  int height_ = 0;
  bool consumed_ = false;
};

struct RecordedDepth {
  DepthMap depth;
  GradientTape tape;
};

class ToyDepthNet {
 public:
  ToyDepthNet() = default;

  /// Random frozen weights (LeCun normal, zero bias), A ~ N(0, std^2), B = 0.
  /// Per-layer rank is min(rank, d, k).
  static ToyDepthNet create(const NetConfig& config);
  static ToyDepthNet from_layers(std::vector<DenseLayer> layers);

  [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  /// Mutable access; invalidates outstanding tapes.
  std::vector<DenseLayer>& mutable_layers() noexcept;

  /// With refiners disabled the net evaluates only the frozen path.
  void set_refiners_enabled(bool enabled) noexcept;
  [[nodiscard]] bool refiners_enabled() const noexcept { return refiners_enabled_; }

  [[nodiscard]] Eigen::VectorXd layer_forward(const Eigen::VectorXd& x, std::size_t layer) const;
  /// Raw outputs (1 x P) for feature columns.
  [[nodiscard]] Eigen::RowVectorXd forward(const Eigen::MatrixXd& features) const;
  [[nodiscard]] GradientTape record(const Eigen::MatrixXd& features) const;

  [[nodiscard]] DepthMap predict_depth(const Image& image) const;
  [[nodiscard]] RecordedDepth predict_depth_recorded(const Image& image) const;

  [[nodiscard]] std::size_t trainable_parameter_count() const noexcept;
  [[nodiscard]] std::size_t frozen_parameter_count() const noexcept;

  /// Refiner parameters flattened layer by layer, A (column-major) then B.
  [[nodiscard]] Eigen::VectorXd refiner_parameters() const;
  void set_refiner_parameters(const Eigen::VectorXd& flat);
  [[nodiscard]] Eigen::VectorXd flatten(const RefinerGradients& grads) const;

  [[nodiscard]] std::uint64_t version() const noexcept { return version_; }

  /// depth = 1 / (softplus(z) + floor); strictly positive and finite.
  static double depth_from_output(double z) noexcept;
  static double depth_derivative(double z) noexcept;

 private:
  std::vector<DenseLayer> layers_;
  bool refiners_enabled_ = true;
  std::uint64_t version_ = 0;
};

inline constexpr double kInverseDepthFloor = 1e-3;

}  // namespace adaptvo

#include "adaptvo/refinernet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

namespace adaptvo {

namespace {

std::atomic<std::uint64_t> g_next_version{1};

double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Image box_blur(const Image& in, int step) {
  const int w = in.width();
  const int h = in.height();
  Image out(w, h, 0.0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double sum = 0.0;
      for (int dv = -1; dv <= 1; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          const int uu = std::clamp(u + du * step, 0, w - 1);
          const int vv = std::clamp(v + dv * step, 0, h - 1);
          sum += in(uu, vv);
        }
      }
      out(u, v) = sum / 9.0;
    }
  }
  return out;
}

void apply_activation(Eigen::MatrixXd& z, Activation act) {
  // Eigen only vectorizes exp for doubles; this form is within 4e-16 of
  // std::tanh and saturates cleanly when exp overflows.
  if (act == Activation::kTanh) z = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

}  // namespace

namespace {
constexpr double kLogOffset = 0.02;
constexpr double kLogCenter = 1.5;
}  // namespace

Eigen::MatrixXd extract_features(const Image& image) {
  if (image.empty()) throw DimensionMismatchError("image is empty");
  const int w = image.width();
  const int h = image.height();
  Eigen::MatrixXd features(kFeatureCount, static_cast<Eigen::Index>(image.size()));
  Image level(w, h);
  for (std::size_t i = 0; i < level.size(); ++i) level[i] = std::log(image[i] + kLogOffset) + kLogCenter;
  int row = 0;
  for (int s = 0; s < 3; ++s) {
    if (s > 0) level = box_blur(level, 1 << (s - 1));
    const int step = 1 << s;
    for (int dv = -1; dv <= 1; ++dv) {
      for (int du = -1; du <= 1; ++du, ++row) {
        for (int v = 0; v < h; ++v) {
          for (int u = 0; u < w; ++u) {
            const int uu = std::clamp(u + du * step, 0, w - 1);
            const int vv = std::clamp(v + dv * step, 0, h - 1);
            features(row, static_cast<Eigen::Index>(image.index(u, v))) = level(uu, vv);
          }
        }
      }
    }
  }
  features.row(row).setOnes();
  return features;
}

// ---------------------------------------------------------------------------
// ToyDepthNet

ToyDepthNet ToyDepthNet::create(const NetConfig& config) {
  if (config.widths.size() < 2) throw std::invalid_argument("net needs at least one layer");
  if (config.rank < 0) throw std::invalid_argument("rank must be non-negative");
  std::mt19937_64 rng(config.seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
    const int k = config.widths[l];
    const int d = config.widths[l + 1];
    if (k <= 0 || d <= 0) throw std::invalid_argument("layer widths must be positive");
    DenseLayer layer;
    std::normal_distribution<double> base(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
    layer.weight.resize(d, k);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = base(rng);
    layer.bias = Eigen::VectorXd::Zero(d);
    layer.activation = l + 2 == config.widths.size() ? Activation::kIdentity : Activation::kTanh;
    const int r = std::min({config.rank, d, k});
    std::normal_distribution<double> init(0.0, config.refiner_init_std);
    layer.refiner.a.resize(r, k);
    for (Eigen::Index j = 0; j < layer.refiner.a.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.refiner.a.rows(); ++i) layer.refiner.a(i, j) = init(rng);
    layer.refiner.b = Eigen::MatrixXd::Zero(d, r);
    layers.push_back(std::move(layer));
  }
  return from_layers(std::move(layers));
}

ToyDepthNet ToyDepthNet::from_layers(std::vector<DenseLayer> layers) {
  if (layers.empty()) throw std::invalid_argument("net needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.outputs()) throw DimensionMismatchError("bias size mismatch");
    if (layer.refiner.a.cols() != layer.inputs() || layer.refiner.b.rows() != layer.outputs() ||
        layer.refiner.b.cols() != layer.refiner.a.rows())
      throw DimensionMismatchError("refiner shape mismatch");
    if (l > 0 && layers[l - 1].outputs() != layer.inputs()) throw DimensionMismatchError("layer chain mismatch");
  }
  if (layers.back().outputs() != 1) throw DimensionMismatchError("final layer must produce one output");
  ToyDepthNet net;
  net.layers_ = std::move(layers);
  net.version_ = g_next_version++;
  return net;
}

std::vector<DenseLayer>& ToyDepthNet::mutable_layers() noexcept {
  version_ = g_next_version++;
  return layers_;
}

void ToyDepthNet::set_refiners_enabled(bool enabled) noexcept {
  refiners_enabled_ = enabled;
  version_ = g_next_version++;
}

Eigen::VectorXd ToyDepthNet::layer_forward(const Eigen::VectorXd& x, std::size_t layer_index) const {
  const DenseLayer& layer = layers_.at(layer_index);
  if (x.size() != layer.inputs()) throw DimensionMismatchError("layer input dimension mismatch");
  Eigen::MatrixXd z = layer.weight * x;
  if (refiners_enabled_ && layer.refiner.rank() > 0) z.noalias() += layer.refiner.b * (layer.refiner.a * x);
  z.colwise() += layer.bias;
  apply_activation(z, layer.activation);
  return z.col(0);
}

Eigen::RowVectorXd ToyDepthNet::forward(const Eigen::MatrixXd& features) const {
  if (features.rows() != layers_.front().inputs()) throw DimensionMismatchError("feature dimension mismatch");
  Eigen::MatrixXd x = features;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z(layer.outputs(), x.cols());
    z.noalias() = layer.weight * x;
    if (refiners_enabled_ && layer.refiner.rank() > 0) {
      const Eigen::MatrixXd ax = layer.refiner.a * x;
      z.noalias() += layer.refiner.b * ax;
    }
    z.colwise() += layer.bias;
    apply_activation(z, layer.activation);
    x = std::move(z);
  }
  return x.row(0);
}

GradientTape ToyDepthNet::record(const Eigen::MatrixXd& features) const {
  if (features.rows() != layers_.front().inputs()) throw DimensionMismatchError("feature dimension mismatch");
  GradientTape tape;
  tape.net_ = this;
  tape.net_version_ = version_;
  tape.layers_.reserve(layers_.size());
  Eigen::MatrixXd x = features;
  for (const auto& layer : layers_) {
    GradientTape::LayerRecord rec;
    Eigen::MatrixXd z(layer.outputs(), x.cols());
    z.noalias() = layer.weight * x;
    if (refiners_enabled_ && layer.refiner.rank() > 0) {
      rec.projected = layer.refiner.a * x;
      z.noalias() += layer.refiner.b * rec.projected;
    }
    z.colwise() += layer.bias;
    apply_activation(z, layer.activation);
    rec.input = std::move(x);
    rec.output = z;
    x = std::move(z);
    tape.layers_.push_back(std::move(rec));
  }
  tape.output_ = x.row(0);
  return tape;
}

DepthMap ToyDepthNet::predict_depth(const Image& image) const {
  const Eigen::RowVectorXd z = forward(extract_features(image));
  DepthMap depth(image.width(), image.height(), 0.0);
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = depth_from_output(z(static_cast<Eigen::Index>(i)));
  return depth;
}

RecordedDepth ToyDepthNet::predict_depth_recorded(const Image& image) const {
  RecordedDepth out{DepthMap(image.width(), image.height(), 0.0), record(extract_features(image))};
  out.tape.width_ = image.width();
  out.tape.height_ = image.height();
  for (std::size_t i = 0; i < out.depth.size(); ++i)
    out.depth[i] = depth_from_output(out.tape.output()(static_cast<Eigen::Index>(i)));
  return out;
}

std::size_t ToyDepthNet::trainable_parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_)
    n += static_cast<std::size_t>(layer.refiner.a.size() + layer.refiner.b.size());
  return n;
}

std::size_t ToyDepthNet::frozen_parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

Eigen::VectorXd ToyDepthNet::refiner_parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(trainable_parameter_count()));
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    flat.segment(at, layer.refiner.a.size()) = layer.refiner.a.reshaped();
    at += layer.refiner.a.size();
    flat.segment(at, layer.refiner.b.size()) = layer.refiner.b.reshaped();
    at += layer.refiner.b.size();
  }
  return flat;
}

void ToyDepthNet::set_refiner_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(trainable_parameter_count()))
    throw DimensionMismatchError("refiner parameter vector size mismatch");
  Eigen::Index at = 0;
  for (auto& layer : mutable_layers()) {
    layer.refiner.a.reshaped() = flat.segment(at, layer.refiner.a.size());
    at += layer.refiner.a.size();
    layer.refiner.b.reshaped() = flat.segment(at, layer.refiner.b.size());
    at += layer.refiner.b.size();
  }
}

Eigen::VectorXd ToyDepthNet::flatten(const RefinerGradients& grads) const {
  if (grads.a.size() != layers_.size() || grads.b.size() != layers_.size())
    throw DimensionMismatchError("gradient layer count mismatch");
  Eigen::VectorXd flat(static_cast<Eigen::Index>(trainable_parameter_count()));
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    flat.segment(at, grads.a[l].size()) = grads.a[l].reshaped();
    at += grads.a[l].size();
    flat.segment(at, grads.b[l].size()) = grads.b[l].reshaped();
    at += grads.b[l].size();
  }
  return flat;
}

double ToyDepthNet::depth_from_output(double z) noexcept { return 1.0 / (softplus(z) + kInverseDepthFloor); }

double ToyDepthNet::depth_derivative(double z) noexcept {
  const double inv = softplus(z) + kInverseDepthFloor;
  return -sigmoid(z) / (inv * inv);
}

// ---------------------------------------------------------------------------
// GradientTape

RefinerGradients GradientTape::backprop(const Eigen::RowVectorXd& output_seed, BaseGradients* base) {
  if (consumed_) throw TapeConsumedError("gradient tape already consumed");
  if (net_ == nullptr) throw TapeConsumedError("gradient tape is empty");
  if (net_->version() != net_version_) throw TapeConsumedError("net changed after the tape was recorded");
  if (output_seed.size() != output_.size()) throw DimensionMismatchError("seed size mismatch");
  consumed_ = true;

  const auto& layers = net_->layers();
  const std::size_t n = layers.size();
  RefinerGradients grads;
  grads.a.resize(n);
  grads.b.resize(n);
  if (base != nullptr) {
    base->weight.resize(n);
    base->bias.resize(n);
  }

  Eigen::MatrixXd upstream = output_seed;
  for (std::size_t l = n; l-- > 0;) {
    const DenseLayer& layer = layers[l];
    LayerRecord& rec = layers_[l];
    Eigen::MatrixXd dz = std::move(upstream);
    if (layer.activation == Activation::kTanh) dz.array() *= 1.0 - rec.output.array().square();

    const bool refined = net_->refiners_enabled() && layer.refiner.rank() > 0;
    Eigen::MatrixXd bt_dz;
    if (refined) {
      grads.b[l].noalias() = dz * rec.projected.transpose();
      bt_dz.noalias() = layer.refiner.b.transpose() * dz;
      grads.a[l].noalias() = bt_dz * rec.input.transpose();
    } else {
      grads.a[l] = Eigen::MatrixXd::Zero(layer.refiner.a.rows(), layer.refiner.a.cols());
      grads.b[l] = Eigen::MatrixXd::Zero(layer.refiner.b.rows(), layer.refiner.b.cols());
    }
    if (base != nullptr) {
      base->weight[l].noalias() = dz * rec.input.transpose();
      base->bias[l] = dz.rowwise().sum();
    }
    if (l > 0) {
      upstream.resize(layer.inputs(), dz.cols());
      upstream.noalias() = layer.weight.transpose() * dz;
      if (refined) upstream.noalias() += layer.refiner.a.transpose() * bt_dz;
    }
  }
  layers_.clear();
  return grads;
}

RefinerGradients GradientTape::backprop_depth(const DepthMap& depth_gradient, BaseGradients* base) {
  if (depth_gradient.size() != static_cast<std::size_t>(output_.size()) || depth_gradient.width() != width_)
    throw DimensionMismatchError("depth gradient size mismatch");
  Eigen::RowVectorXd seed(output_.size());
  for (Eigen::Index i = 0; i < output_.size(); ++i)
    seed(i) = depth_gradient[static_cast<std::size_t>(i)] * ToyDepthNet::depth_derivative(output_(i));
  return backprop(seed, base);
}

}  // namespace adaptvo

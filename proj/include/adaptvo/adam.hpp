#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace adaptvo {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam. Moments are sized on first use.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr,
               const AdamOptions& options = {});

}  // namespace adaptvo

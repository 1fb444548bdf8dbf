#include "adaptvo/adam.hpp"

#include <cmath>

#include "adaptvo/error.hpp"

namespace adaptvo {

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr,
               const AdamOptions& options) {
  if (grads.size() != params.size()) throw DimensionMismatchError("gradient size does not match parameters");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  if (state.m.size() != params.size()) throw DimensionMismatchError("optimizer state size mismatch");
  ++state.step;
  state.m = options.beta1 * state.m + (1.0 - options.beta1) * grads;
  state.v = options.beta2 * state.v + (1.0 - options.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.m(i) / c1;
    const double v_hat = state.v(i) / c2;
    params(i) -= lr * m_hat / (std::sqrt(v_hat) + options.epsilon);
  }
}

}  // namespace adaptvo

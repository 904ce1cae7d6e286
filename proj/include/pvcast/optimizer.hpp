#pragma once

#include <vector>

#include "pvcast/tensor.hpp"

namespace pvcast {

/// SGD with Nesterov momentum in the velocity-lookahead form
///   v <- mu * v - lr * g
///   theta <- theta + mu * v - lr * g
///
/// The parameter set is fixed at construction; velocities start at zero and
/// persist across steps.
class SgdNesterov {
 public:
  SgdNesterov(std::vector<Tensor*> params, double learning_rate, double momentum);

  /// Applies one update from each parameter's grad buffer. Throws
  /// ContractError when a parameter has no gradient or changed size.
  void step();
  void zero_grad();

  double learning_rate() const noexcept { return learning_rate_; }
  double momentum() const noexcept { return momentum_; }
  const std::vector<std::vector<double>>& velocity() const noexcept { return velocity_; }

  /// Optional global-norm gradient clipping; <= 0 disables it (the default).
  /// Steps where clipping engaged are counted by `clipped_steps()`.
  void set_clip_norm(double max_norm) { clip_norm_ = max_norm; }
  long clipped_steps() const noexcept { return clipped_steps_; }

 private:
  std::vector<Tensor*> params_;
  double learning_rate_;
  double momentum_;
  double clip_norm_ = 0.0;
  long clipped_steps_ = 0;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace pvcast

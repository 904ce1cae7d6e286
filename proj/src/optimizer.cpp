#include "pvcast/optimizer.hpp"

#include <cmath>
#include <string>

#include "pvcast/errors.hpp"

namespace pvcast {

SgdNesterov::SgdNesterov(std::vector<Tensor*> params, double learning_rate, double momentum)
    : params_(std::move(params)), learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate_ >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(momentum_ >= 0.0 && momentum_ < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  velocity_.reserve(params_.size());
  for (const Tensor* p : params_) velocity_.emplace_back(p->size(), 0.0);
}

void SgdNesterov::step() {
  double factor = 1.0;
  if (clip_norm_ > 0.0) {
    double sq = 0.0;
    for (const Tensor* p : params_) {
      for (double g : p->grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm_) {
      factor = clip_norm_ / norm;
      ++clipped_steps_;
    }
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    auto& v = velocity_[k];
    if (!p.requires_grad()) {
      throw ContractError("parameter " + std::to_string(k) + " has no gradient buffer");
    }
    if (v.size() != p.size()) {
      throw ContractError("parameter " + std::to_string(k) + " changed size since registration");
    }
    auto theta = p.values();
    auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double step = learning_rate_ * factor * g[i];
      v[i] = momentum_ * v[i] - step;
      theta[i] += momentum_ * v[i] - step;
    }
  }
}

void SgdNesterov::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace pvcast

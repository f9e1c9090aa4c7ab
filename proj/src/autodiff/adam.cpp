#include "deepsum/adam.hpp"

#include <cmath>
#include <string>

namespace deepsum {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    if (!p.requires_grad()) throw std::invalid_argument("Adam parameters must require gradients");
    state_.first_moment.emplace_back(p.size(), 0.0);
    state_.second_moment.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    for (double g : params_[i].node()->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter " + std::to_string(i) + " of shape " +
                           shape_str(params_[i].shape()));
      }
    }
  }

  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::vector<double>& grad = params_[i].node()->grad;
    auto values = params_[i].mutable_values();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      values[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  zero_grad();
}

}  // namespace deepsum

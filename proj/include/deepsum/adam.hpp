#pragma once

#include <cstdint>
#include <vector>

#include "deepsum/errors.hpp"
#include "deepsum/tensor.hpp"

namespace deepsum {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 5e-6;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

/// Adam with bias correction over a fixed list of leaf parameters.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// Applies one update from the parameters' accumulated gradients, then
  /// clears them. A non-finite gradient throws NumericError before any
  /// parameter is touched.
  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace deepsum

#pragma once

#include <cstdint>
#include <vector>

#include "demixkit/tensor.hpp"

namespace demixkit {

// Defaults follow the training setup used throughout: beta1 = 0.95,
// beta2 = 0.999, epsilon = 1e-8, initial learning rate 1e-3.
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over a fixed parameter list. Moment buffers are
// kept per parameter in list order, so two optimizers fed identical
// gradients produce bit-identical trajectories.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

  // One update from the parameters' current gradients. A parameter whose
  // gradient buffer is empty (never touched by backward) is treated as
  // having a zero gradient.
  void step();

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Serialized state access, in parameter order.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace demixkit

#pragma once

#include <cstdint>
#include <vector>

#include "tjaidl/tensor.hpp"

namespace tjaidl {

struct AdamConfig {
  double learning_rate = 0.002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam over one fixed parameter group. Moment buffers are
/// created lazily on the first step and matched to parameters by position.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Applies one update and clears the gradients of every parameter.
  /// Throws ContractViolation if a parameter has no gradient.
  void step(std::vector<Tensor>& params);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_count_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

  /// Restores a saved state (checkpoint load).
  void restore(std::uint64_t step_count, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace tjaidl

#include "tjaidl/adam.hpp"

#include <cmath>

#include "tjaidl/error.hpp"

namespace tjaidl {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("adam.lr", "must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1", "must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2", "must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon", "must be positive");
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(std::vector<Tensor>& params) {
  for (const auto& p : params) {
    if (!p.has_grad()) throw ContractViolation("adam step: parameter without gradient");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw ContractViolation("adam step: parameter group changed between steps");
  }

  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    auto grad = params[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != values.size()) throw ContractViolation("adam step: parameter resized");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    params[k].zero_grad();
  }
}

void Adam::restore(std::uint64_t step_count, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != v.size()) throw ContractViolation("adam restore: moment count mismatch");
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace tjaidl

// SPDX-License-Identifier: Apache-2.0
#include "mere/optimizer.hpp"

#include <cmath>

#include "mere/errors.hpp"

namespace mere {

void AdamW::step(ParamStore& params) {
  for (const auto& p : params.parameters()) {
    if (!p.frozen && !p.value.has_grad()) {
      throw ConfigError("adamw: unfrozen parameter '" + p.name + "' has no gradient");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;

  for (const auto& p : params.parameters()) {
    if (p.frozen) {
      moments_.erase(p.name);
      continue;
    }
    auto& state = moments_[p.name];
    Tensor value = p.value;
    auto data = value.mutable_data();
    auto grad = value.grad();
    if (state.first.size() != data.size()) {
      state.first.assign(data.size(), 0.0);
      state.second.assign(data.size(), 0.0);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      state.first[i] = config_.beta1 * state.first[i] + (1.0 - config_.beta1) * g;
      state.second[i] = config_.beta2 * state.second[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = state.first[i] / correction1;
      const double v_hat = state.second[i] / correction2;
      const double update = m_hat / (std::sqrt(v_hat) + config_.epsilon);
      data[i] -= lr * (update + config_.weight_decay * data[i]);
    }
  }
}

void AdamW::load_state(std::size_t steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

double grad_norm(const ParamStore& params) {
  double total = 0.0;
  for (const auto& p : params.parameters()) {
    if (p.frozen || !p.value.has_grad()) continue;
    for (double g : p.value.grad()) total += g * g;
  }
  return std::sqrt(total);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params.parameters()) {
      if (p.frozen || !p.value.has_grad()) continue;
      Tensor value = p.value;
      for (auto& g : value.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

}  // namespace mere

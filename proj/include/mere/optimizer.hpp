// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mere/params.hpp"

namespace mere {

struct AdamWConfig {
  double learning_rate = 1e-3;  // 3e-5 at full scale
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
/// Frozen parameters are skipped and carry no moment buffers.
class AdamW {
 public:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// One update of every unfrozen parameter from its gradient buffer.
  /// Throws ConfigError if an unfrozen parameter has no gradient.
  void step(ParamStore& params);

  std::size_t step_count() const noexcept { return steps_; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  void load_state(std::size_t steps, std::map<std::string, Moments> moments);

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Scales gradients of unfrozen parameters so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

/// Global L2 norm of the gradients of unfrozen parameters.
double grad_norm(const ParamStore& params);

}  // namespace mere

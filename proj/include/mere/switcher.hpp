// SPDX-License-Identifier: Apache-2.0
//
// Bank of T adapter sub-modules mixed by a language-conditioned router.
//
//   probs = softmax(E_l[lang] W_f)
//   E_t(h) = LN(relu(h W_u) W_d + h), applied layers[t] times
//   train:   sum_t probs_t E_t(h)
//   eval(k): the k most probable sub-modules, weights renormalized to 1
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mere/params.hpp"

namespace mere {

class Rng;

enum class Routing {
  kLearned,
  /// One sub-module per language, selected by language id; no router weights.
  kIdentity,
};

std::string to_string(Routing routing);
Routing parse_routing(std::string_view text);

struct SwitcherConfig {
  /// Layer count of each sub-module; T = layers.size().
  std::vector<std::size_t> layers{2, 2, 2, 1, 1, 1};
  /// Adapter width b; 0 means 2d.
  std::size_t bottleneck = 0;
  Routing routing = Routing::kLearned;
  /// Standard deviation of the E_l initialization. With W_f ~ N(0, 1/d) the
  /// initial router logits have standard deviation close to this value.
  double router_init = 1.0;

  std::size_t experts() const noexcept { return layers.size(); }
};

struct SwitchMode {
  bool soft = true;
  std::size_t k = 0;

  static SwitchMode train() { return {true, 0}; }
  static SwitchMode eval(std::size_t k) { return {false, k}; }
};

struct SwitchDecision {
  std::vector<double> probs;
  /// Indices of the k largest probabilities, in decreasing order of
  /// probability (ties to the lower index).
  std::vector<std::size_t> retained;
  /// Renormalized weights aligned with `retained`.
  std::vector<double> weights;
};

/// Top-k selection over `probs`. Throws ConfigError unless 1 <= k <= size.
SwitchDecision select_top_k(std::span<const double> probs, std::size_t k);

class Switcher {
 public:
  Switcher() = default;
  /// Registers switcher.* and (for learned routing) router.* parameters.
  Switcher(ParamStore& store, std::size_t d, std::size_t num_languages, const SwitcherConfig& config, Rng& rng);

  const SwitcherConfig& config() const noexcept { return config_; }
  std::size_t experts() const noexcept { return config_.experts(); }
  std::size_t num_languages() const noexcept { return num_languages_; }

  /// Router probabilities f(lang) as a differentiable [T] tensor.
  Tensor route(std::size_t lang) const;
  SwitchDecision decide(std::size_t lang, std::size_t k) const;

  Tensor apply_submodule(std::size_t t, const Tensor& h) const;
  Tensor forward(const Tensor& h, std::size_t lang, SwitchMode mode) const;
  /// Soft mixture with explicit probabilities.
  Tensor mix(const Tensor& h, const Tensor& probs) const;

 private:
  struct Layer {
    Tensor wu, wd, gain, bias;
  };

  SwitcherConfig config_;
  std::size_t d_ = 0;
  std::size_t num_languages_ = 0;
  std::vector<std::vector<Layer>> experts_;
  Tensor language_embedding_;  // E_l [N x d]
  Tensor router_;              // W_f [d x T]
};

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
#include "mere/switcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mere/errors.hpp"
#include "mere/ops.hpp"
#include "mere/rng.hpp"

namespace mere {

std::string to_string(Routing routing) { return routing == Routing::kLearned ? "learned" : "identity"; }

Routing parse_routing(std::string_view text) {
  if (text == "learned") return Routing::kLearned;
  if (text == "identity") return Routing::kIdentity;
  throw ConfigError("unknown routing '" + std::string(text) + "' (expected learned or identity)");
}

SwitchDecision select_top_k(std::span<const double> probs, std::size_t k) {
  if (k < 1 || k > probs.size()) {
    throw ConfigError("top-k must lie in [1, " + std::to_string(probs.size()) + "], got " + std::to_string(k));
  }
  SwitchDecision dec;
  dec.probs.assign(probs.begin(), probs.end());
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  dec.retained.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  double total = 0.0;
  for (std::size_t t : dec.retained) total += probs[t];
  for (std::size_t t : dec.retained) dec.weights.push_back(total > 0.0 ? probs[t] / total : 1.0 / static_cast<double>(k));
  return dec;
}

Switcher::Switcher(ParamStore& store, std::size_t d, std::size_t num_languages, const SwitcherConfig& config,
                   Rng& rng)
    : config_(config), d_(d), num_languages_(num_languages) {
  if (config.layers.empty()) throw ConfigError("switcher needs at least one sub-module");
  const std::size_t b = config.bottleneck == 0 ? 2 * d : config.bottleneck;
  if (b <= d) throw ConfigError("switcher bottleneck b must exceed d");
  config_.bottleneck = b;
  if (config.routing == Routing::kIdentity && config.experts() != num_languages) {
    throw ConfigError("identity routing needs one sub-module per language (T = " + std::to_string(num_languages) + ")");
  }
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t t = 0; t < config.experts(); ++t) {
    if (config.layers[t] == 0) throw ConfigError("sub-module layer counts must be at least 1");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < config.layers[t]; ++l) {
      const std::string p = "switcher.expert" + std::to_string(t) + ".layer" + std::to_string(l) + ".";
      Layer layer;
      layer.wu = store.add_normal(p + "wu", {d, b}, sd, rng);
      layer.wd = store.add_normal(p + "wd", {b, d}, 1.0 / std::sqrt(static_cast<double>(b)), rng);
      layer.gain = store.add_constant(p + "ln.gain", {d}, 1.0);
      layer.bias = store.add_zeros(p + "ln.bias", {d});
      layers.push_back(layer);
    }
    experts_.push_back(std::move(layers));
  }
  if (config.routing == Routing::kLearned) {
    language_embedding_ = store.add_normal("router.language_embedding", {num_languages, d}, config.router_init, rng);
    router_ = store.add_normal("router.wf", {d, config.experts()}, sd, rng);
  }
}

Tensor Switcher::route(std::size_t lang) const {
  if (lang >= num_languages_) {
    throw DataError("route: language id " + std::to_string(lang) + " outside [0, " + std::to_string(num_languages_) + ")");
  }
  if (config_.routing == Routing::kIdentity) {
    Tensor onehot = Tensor::zeros({experts()});
    onehot.mutable_data()[lang] = 1.0;
    return onehot;
  }
  const std::size_t row[] = {lang};
  return reshape(softmax_rows(matmul(gather_rows(language_embedding_, row), router_)), {experts()});
}

SwitchDecision Switcher::decide(std::size_t lang, std::size_t k) const {
  const Tensor probs = route(lang);
  return select_top_k(probs.data(), k);
}

Tensor Switcher::apply_submodule(std::size_t t, const Tensor& h) const {
  if (t >= experts()) throw DimensionError("apply_submodule: no sub-module " + std::to_string(t));
  Tensor x = h;
  for (const auto& layer : experts_[t]) {
    x = layer_norm(add(matmul(relu(matmul(x, layer.wu)), layer.wd), x), layer.gain, layer.bias);
  }
  return x;
}

Tensor Switcher::mix(const Tensor& h, const Tensor& probs) const {
  if (probs.size() != experts()) throw DimensionError("mix: probability vector " + shape_str(probs.shape()));
  Tensor out;
  for (std::size_t t = 0; t < experts(); ++t) {
    if (probs.value(t) == 0.0 && !probs.requires_grad()) continue;
    const Tensor term = mul_scalar(apply_submodule(t, h), element(probs, t));
    out = out.defined() ? add(out, term) : term;
  }
  if (!out.defined()) throw NumericalError("mix: every routing weight is zero");
  return out;
}

Tensor Switcher::forward(const Tensor& h, std::size_t lang, SwitchMode mode) const {
  if (mode.soft) return mix(h, route(lang));
  const SwitchDecision dec = decide(lang, mode.k);
  Tensor out;
  for (std::size_t i = 0; i < dec.retained.size(); ++i) {
    const Tensor term = scale(apply_submodule(dec.retained[i], h), dec.weights[i]);
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

}  // namespace mere

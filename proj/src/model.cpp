// SPDX-License-Identifier: Apache-2.0
#include "mere/model.hpp"

#include <memory>

#include "mere/errors.hpp"
#include "mere/ops.hpp"
#include "mere/rng.hpp"

namespace mere {

using nlohmann::json;

void ModelConfig::validate() const {
  encoder.validate();
  if (num_languages == 0) throw ConfigError("model needs at least one language");
  if (num_relations < 2) throw ConfigError("model needs no_relation and at least one relation");
  if (encoder.vocab_size < 3 + num_languages) throw ConfigError("vocabulary smaller than its reserved tokens");
  if (switcher.layers.empty()) throw ConfigError("switcher needs at least one sub-module");
}

json ModelConfig::to_json() const {
  return {{"vocab_size", encoder.vocab_size},
          {"d", encoder.d},
          {"blocks", encoder.blocks},
          {"heads", encoder.heads},
          {"ffn", encoder.ffn},
          {"max_len", encoder.max_len},
          {"lang_token", lang_token},
          {"expert_layers", switcher.layers},
          {"bottleneck", switcher.bottleneck},
          {"routing", to_string(switcher.routing)},
          {"router_init", switcher.router_init},
          {"num_languages", num_languages},
          {"num_relations", num_relations},
          {"relation_source", relation_source == RelationSource::kEncoder ? "encoder" : "features"}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
  ModelConfig c;
  try {
    c.encoder.vocab_size = doc.value("vocab_size", std::size_t{0});
    c.encoder.d = doc.value("d", c.encoder.d);
    c.encoder.blocks = doc.value("blocks", c.encoder.blocks);
    c.encoder.heads = doc.value("heads", c.encoder.heads);
    c.encoder.ffn = doc.value("ffn", c.encoder.ffn);
    c.encoder.max_len = doc.value("max_len", c.encoder.max_len);
    c.lang_token = doc.value("lang_token", c.lang_token);
    c.switcher.layers = doc.value("expert_layers", c.switcher.layers);
    c.switcher.bottleneck = doc.value("bottleneck", c.switcher.bottleneck);
    c.switcher.routing = parse_routing(doc.value("routing", std::string("learned")));
    c.switcher.router_init = doc.value("router_init", c.switcher.router_init);
    c.num_languages = doc.value("num_languages", std::size_t{0});
    c.num_relations = doc.value("num_relations", std::size_t{0});
    const std::string source = doc.value("relation_source", std::string("encoder"));
    if (source == "encoder") {
      c.relation_source = RelationSource::kEncoder;
    } else if (source == "features") {
      c.relation_source = RelationSource::kFeatures;
    } else {
      throw ConfigError("relation_source must be 'encoder' or 'features'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(mix_seed(seed, fnv1a("model-init")));
  const std::size_t d = config.encoder.d;
  encoder_ = Encoder(store_, config.encoder, rng);
  aggregator_ = Aggregator(store_, d, rng);
  switcher_ = Switcher(store_, d, config.num_languages, config.switcher, rng);
  config_.switcher.bottleneck = switcher_.config().bottleneck;
  relation_ = RelationHead(store_, d, config.num_relations, rng);
  entity_ = EntityHeads(store_, d, rng);
}

BaseFeatures Model::base_features(const TokenizedSentence& s) const {
  const EncoderOutput enc = encoder_.encode(s);
  return {enc.pooled, aggregator_.aggregate_single(enc.hidden, s.attention_mask)};
}

Tensor Model::head_features(const BaseFeatures& base, std::size_t lang, bool use_switcher, SwitchMode mode) const {
  return use_switcher ? switcher_.forward(base.aggregated, lang, mode) : base.aggregated;
}

Tensor Model::relation_logits(const BaseFeatures& base, const Tensor& features) const {
  if (config_.relation_source == RelationSource::kEncoder) return relation_.logits(base.pooled);
  return relation_.logits(reshape(slice_rows(features, 0, 1), {config_.encoder.d}));
}

TriplePrediction Model::predict_from(const TokenizedSentence& s, const BaseFeatures& base,
                                     std::span<const double> relation_mask, InferenceMode mode) const {
  const Tensor features = head_features(base, s.lang, mode.use_switcher, mode.switch_mode);
  TriplePrediction pred;
  pred.id = s.id;
  const Tensor logits = relation_logits(base, features);
  pred.relation_logits.assign(logits.data().begin(), logits.data().end());
  pred.relation = masked_argmax(pred.relation_logits, relation_mask);
  if (pred.relation == 0) return pred;

  const auto raw = entity_.scores(features, relation_.embedding(pred.relation));
  const auto mask = s.position_mask();
  for (std::size_t y = 0; y < 4; ++y) {
    auto& out = pred.scores[y];
    out.assign(raw[y].data().begin(), raw[y].data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mask[i];
  }
  auto [head, tail] = decode_spans(pred.scores);
  const int offset = static_cast<int>(s.content_begin);
  pred.head = {head.start - offset, head.end - offset};
  pred.tail = {tail.start - offset, tail.end - offset};
  return pred;
}

TriplePrediction Model::predict(const TokenizedSentence& s, std::span<const double> relation_mask,
                                InferenceMode mode) const {
  return predict_from(s, base_features(s), relation_mask, mode);
}

CheckpointData Model::to_checkpoint(json meta) const {
  CheckpointData data;
  meta["model"] = config_.to_json();
  meta["stage"] = stage_;
  data.meta = std::move(meta);
  for (const auto& p : store_.parameters()) {
    data.tensors.push_back({p.name, p.value.shape(), std::vector<double>(p.value.data().begin(), p.value.data().end())});
  }
  return data;
}

void Model::load_parameters(const CheckpointData& data) {
  std::size_t matched = 0;
  for (const auto& t : data.tensors) {
    if (t.name.rfind("adamw.", 0) == 0) continue;
    if (!store_.contains(t.name)) throw DataError("checkpoint tensor '" + t.name + "' is not a model parameter");
    Tensor target = store_.get(t.name);
    if (target.shape() != t.shape) {
      throw DataError("checkpoint tensor '" + t.name + "' has shape " + shape_str(t.shape) + ", config expects " +
                      shape_str(target.shape()));
    }
    std::copy(t.values.begin(), t.values.end(), target.mutable_data().begin());
    ++matched;
  }
  if (matched != store_.size()) {
    throw DataError("checkpoint holds " + std::to_string(matched) + " of " + std::to_string(store_.size()) +
                    " model parameters");
  }
  stage_ = data.meta.value("stage", 0);
}

std::unique_ptr<Model> Model::from_checkpoint(const CheckpointData& data) {
  if (!data.meta.contains("model")) throw DataError("checkpoint has no model config");
  auto model = std::make_unique<Model>(ModelConfig::from_json(data.meta.at("model")), 0);
  model->load_parameters(data);
  return model;
}

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
//
// The full extraction model: encoder -> aggregator -> switcher -> heads, its
// configuration, checkpoint I/O and single-sentence prediction.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mere/aggregator.hpp"
#include "mere/checkpoint.hpp"
#include "mere/encoder.hpp"
#include "mere/heads.hpp"
#include "mere/params.hpp"
#include "mere/switcher.hpp"
#include "mere/vocab.hpp"

namespace mere {

enum class RelationSource {
  /// Relation logits from the encoder's [CLS] row.
  kEncoder,
  /// Relation logits from the [CLS] row of the features fed to the entity heads.
  kFeatures,
};

struct ModelConfig {
  EncoderConfig encoder;
  bool lang_token = true;
  SwitcherConfig switcher;
  std::size_t num_languages = 0;
  std::size_t num_relations = 0;
  RelationSource relation_source = RelationSource::kEncoder;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

struct TriplePrediction {
  std::string id;
  std::size_t relation = 0;
  /// Content-token spans, comparable with Example spans.
  Span head = kSentinelSpan;
  Span tail = kSentinelSpan;
  std::vector<double> relation_logits;
  /// Masked position scores over the full sequence; empty for no_relation.
  std::array<std::vector<double>, 4> scores;
};

struct InferenceMode {
  /// false evaluates encoder -> aggregator -> heads, as after stage 1.
  bool use_switcher = true;
  SwitchMode switch_mode = SwitchMode::eval(3);
};

/// Encoder and aggregator outputs for one sentence; fixed once those
/// components are frozen.
struct BaseFeatures {
  Tensor pooled;
  Tensor aggregated;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  const Aggregator& aggregator() const noexcept { return aggregator_; }
  const Switcher& switcher() const noexcept { return switcher_; }
  const RelationHead& relation_head() const noexcept { return relation_; }
  const EntityHeads& entity_heads() const noexcept { return entity_; }

  /// 0 = untrained, 1 = after stage 1, 2 = after stage 2.
  int stage() const noexcept { return stage_; }
  void set_stage(int stage) noexcept { stage_ = stage; }

  BaseFeatures base_features(const TokenizedSentence& sentence) const;
  /// Features for the entity heads: the aggregated rows, optionally switched.
  Tensor head_features(const BaseFeatures& base, std::size_t lang, bool use_switcher, SwitchMode mode) const;
  Tensor relation_logits(const BaseFeatures& base, const Tensor& features) const;

  TriplePrediction predict_from(const TokenizedSentence& sentence, const BaseFeatures& base,
                                std::span<const double> relation_mask, InferenceMode mode) const;
  TriplePrediction predict(const TokenizedSentence& sentence, std::span<const double> relation_mask,
                           InferenceMode mode) const;

  /// Parameters plus `meta` (which gains "model" and "stage").
  CheckpointData to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const;
  /// Copies checkpoint tensors into this model; every parameter must be
  /// present with a matching shape. Tensors prefixed "adamw." are ignored.
  void load_parameters(const CheckpointData& data);
  static std::unique_ptr<Model> from_checkpoint(const CheckpointData& data);

 private:
  ModelConfig config_;
  ParamStore store_;
  Encoder encoder_;
  Aggregator aggregator_;
  Switcher switcher_;
  RelationHead relation_;
  EntityHeads entity_;
  int stage_ = 0;
};

}  // namespace mere

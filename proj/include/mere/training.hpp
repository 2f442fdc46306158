// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training.
//
// Stage 1 samples groups of s sentences in distinct languages, encodes each,
// runs the aggregator over the concatenation, and trains encoder, aggregator and
// heads on the joint loss (relation from the encoder [CLS] row, entities from the
// aggregated rows). Stage 2 freezes encoder and aggregator and trains the
// switcher, router and heads sentence by sentence with early stopping on dev
// macro triple F1.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mere/corpus.hpp"
#include "mere/metrics.hpp"
#include "mere/model.hpp"
#include "mere/optimizer.hpp"
#include "mere/vocab.hpp"

namespace mere {

struct TrainingConfig {
  double alpha = 2.0;
  double beta = 1.0;
  /// Sentences per stage-1 group.
  std::size_t concat_count = 2;
  std::size_t stage1_epochs = 5;
  std::size_t stage2_max_epochs = 8;
  std::size_t patience = 2;
  /// Sentences per optimizer step.
  std::size_t batch_size = 16;
  AdamWConfig optimizer;
  /// 0 disables clipping.
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
  std::size_t eval_k = 3;
  /// Log every N optimizer steps (0 = only epoch summaries).
  std::size_t log_every = 20;

  void validate(std::size_t experts) const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainingConfig from_json(const nlohmann::json& doc);
};

struct Dataset {
  Registry registry;
  Vocab vocab;
  Splits splits;
  std::vector<TokenizedSentence> train, dev, test;

  static Dataset make(Registry registry, Vocab vocab, Splits splits, std::size_t max_len, bool lang_token);
  /// Reads registry.json, vocab.txt, train.txt, dev.txt and test.txt from `dir`.
  static Dataset load(const std::string& dir, std::size_t max_len, bool lang_token);
  /// Examples restricted to `languages`; registry and vocabulary unchanged.
  Dataset restrict_to(const std::set<std::size_t>& languages) const;
};

/// Writes registry.json, vocab.txt and the three split files.
void save_dataset(const std::string& dir, const Registry& registry, const Vocab& vocab, const Splits& splits);

struct EreLossTerms {
  Tensor relation;
  /// head start, head end, tail start, tail end; absent for no_relation.
  std::optional<std::array<Tensor, 4>> entity;
};

/// (1/B) sum_i [alpha/2 * (sum of entity terms) + beta * relation term].
Tensor loss_ere(std::span<const EreLossTerms> terms, double alpha, double beta);

/// Loss terms for one sentence with the gold relation teacher-forced.
EreLossTerms sentence_loss_terms(const Model& model, const TokenizedSentence& sentence, const Tensor& pooled,
                                 const Tensor& features);

struct FreezePlan {
  std::vector<std::string> frozen;
  std::vector<std::string> trainable;

  /// Encoder and aggregator frozen, everything else trainable.
  static FreezePlan stage2(const ParamStore& store);
  /// Throws ConfigError unless frozen and trainable partition the store.
  void validate(const ParamStore& store) const;
  void apply(ParamStore& store) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double loss = 0.0;
  double relation = 0.0;
  double entity = 0.0;
  std::optional<double> dev_triple_f1;
};

struct StageResult {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  std::optional<MetricsReport> dev_report;
};

struct TrainHooks {
  std::function<void(const std::string&)> log;
  /// Called after each completed stage-1 epoch (for resumable checkpoints).
  std::function<void(const Model&, const AdamW&, std::size_t epochs_completed)> epoch_end;
};

StageResult train_stage1(Model& model, AdamW& optimizer, const Dataset& data, const TrainingConfig& config,
                         std::size_t start_epoch = 0, const TrainHooks& hooks = {});
StageResult train_stage2(Model& model, const Dataset& data, const TrainingConfig& config,
                         const TrainHooks& hooks = {});

/// Parameters, optimizer moments ("adamw.m/<name>", "adamw.v/<name>") and
/// `meta` in one container.
CheckpointData training_checkpoint(const Model& model, const AdamW* optimizer, nlohmann::json meta);
void restore_optimizer(const CheckpointData& data, AdamW& optimizer);

struct Evaluation {
  MetricsReport report;
  std::vector<TriplePrediction> predictions;
};

/// Switcher in use iff the model finished stage 2.
InferenceMode default_inference(const Model& model, std::size_t k);
Evaluation evaluate(const Model& model, const Registry& registry, const std::vector<Example>& gold,
                    const std::vector<TokenizedSentence>& sentences, InferenceMode mode,
                    const std::vector<BaseFeatures>* cache = nullptr);

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
//
// Run configuration and the end-to-end stage drivers shared by the CLI and
// the ablation runner.
//
// A run config is one JSON document:
//
//   {"corpus": "<dir>", "model": {...}, "training": {...}}
//
// Relative corpus paths resolve against the config file's directory.
#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "mere/model.hpp"
#include "mere/training.hpp"

namespace mere {

nlohmann::json default_run_config();

/// Applies "a.b.c=value" to `doc`; value is parsed as JSON, falling back to a
/// plain string. Throws ConfigError for a malformed assignment.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults merged with the file contents.
nlohmann::json load_run_config(const std::string& path);

/// 16 hex digits of FNV-1a over the canonical dump.
std::string config_hash(const nlohmann::json& doc);

struct RunConfig {
  std::string corpus;
  nlohmann::json model = nlohmann::json::object();
  TrainingConfig training;

  static RunConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  /// Model dimensions from `model` plus vocabulary/language/relation counts.
  ModelConfig model_config(const Dataset& data) const;
  std::size_t max_len() const;
  bool lang_token() const;
};

Dataset load_dataset(const RunConfig& config);

/// Fresh model trained through stage 1.
std::unique_ptr<Model> run_stage1(const RunConfig& config, const Dataset& data, const TrainHooks& hooks = {},
                                  StageResult* result = nullptr);
/// Stage 2 on a copy of `stage1` (parameters copied through a checkpoint).
std::unique_ptr<Model> run_stage2(const Model& stage1, const RunConfig& config, const Dataset& data,
                                  const TrainHooks& hooks = {}, StageResult* result = nullptr);
/// Deep copy through the checkpoint representation.
std::unique_ptr<Model> clone_model(const Model& model);

/// Stage 2 on a stage-1 model whose switcher is rebuilt from `switcher` (the
/// stage-1 switcher weights are never trained, so only their init changes).
std::unique_ptr<Model> run_stage2_with_switcher(const Model& stage1, const SwitcherConfig& switcher,
                                                const RunConfig& config, const Dataset& data,
                                                const TrainHooks& hooks = {});

}  // namespace mere

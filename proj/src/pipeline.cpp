// SPDX-License-Identifier: Apache-2.0
#include "mere/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mere/errors.hpp"
#include "mere/rng.hpp"

namespace mere {

using nlohmann::json;

json default_run_config() {
  json doc;
  doc["corpus"] = "corpus";
  doc["model"] = {{"d", 64},
                  {"blocks", 2},
                  {"heads", 4},
                  {"ffn", 128},
                  {"max_len", 48},
                  {"lang_token", true},
                  {"expert_layers", {2, 2, 2, 1, 1, 1}},
                  {"bottleneck", 0},
                  {"routing", "learned"},
                  {"router_init", 1.0},
                  {"relation_source", "encoder"}};
  doc["training"] = TrainingConfig{}.to_json();
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  std::string pointer;
  std::size_t start = 0;
  while (start <= key.size()) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  doc[json::json_pointer(pointer)] = value;
}

json load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json file;
  try {
    file = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  json doc = default_run_config();
  doc.merge_patch(file);
  const std::string corpus = doc.value("corpus", std::string());
  if (!corpus.empty() && std::filesystem::path(corpus).is_relative()) {
    doc["corpus"] = (std::filesystem::path(path).parent_path() / corpus).lexically_normal().string();
  }
  return doc;
}

std::string config_hash(const json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(doc.dump())));
  return buf;
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig c;
  try {
    c.corpus = doc.value("corpus", std::string());
    if (doc.contains("model")) c.model = doc.at("model");
    if (doc.contains("training")) c.training = TrainingConfig::from_json(doc.at("training"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  ModelConfig probe = ModelConfig::from_json(c.model);
  c.training.validate(probe.switcher.experts());
  return c;
}

json RunConfig::to_json() const {
  return {{"corpus", corpus}, {"model", model}, {"training", training.to_json()}};
}

std::size_t RunConfig::max_len() const { return model.value("max_len", std::size_t{48}); }
bool RunConfig::lang_token() const { return model.value("lang_token", true); }

ModelConfig RunConfig::model_config(const Dataset& data) const {
  ModelConfig c = ModelConfig::from_json(model);
  c.encoder.vocab_size = data.vocab.size();
  c.num_languages = data.registry.num_languages();
  c.num_relations = data.registry.schema.size();
  if (c.switcher.bottleneck == 0) c.switcher.bottleneck = 2 * c.encoder.d;
  return c;
}

Dataset load_dataset(const RunConfig& config) {
  if (config.corpus.empty()) throw ConfigError("run config has no corpus directory");
  return Dataset::load(config.corpus, config.max_len(), config.lang_token());
}

std::unique_ptr<Model> run_stage1(const RunConfig& config, const Dataset& data, const TrainHooks& hooks,
                                  StageResult* result) {
  auto model = std::make_unique<Model>(config.model_config(data), config.training.seed);
  AdamW optimizer(config.training.optimizer);
  StageResult r = train_stage1(*model, optimizer, data, config.training, 0, hooks);
  if (result) *result = std::move(r);
  return model;
}

std::unique_ptr<Model> clone_model(const Model& model) { return Model::from_checkpoint(model.to_checkpoint()); }

std::unique_ptr<Model> run_stage2(const Model& stage1, const RunConfig& config, const Dataset& data,
                                  const TrainHooks& hooks, StageResult* result) {
  auto model = clone_model(stage1);
  StageResult r = train_stage2(*model, data, config.training, hooks);
  if (result) *result = std::move(r);
  return model;
}

std::unique_ptr<Model> run_stage2_with_switcher(const Model& stage1, const SwitcherConfig& switcher,
                                                const RunConfig& config, const Dataset& data,
                                                const TrainHooks& hooks) {
  ModelConfig mc = stage1.config();
  mc.switcher = switcher;
  mc.switcher.bottleneck = switcher.bottleneck;
  auto model = std::make_unique<Model>(mc, config.training.seed);
  for (const auto& p : stage1.params().parameters()) {
    if (p.name.rfind("switcher.", 0) == 0 || p.name.rfind("router.", 0) == 0) continue;
    Tensor dst = model->params().get(p.name);
    std::copy(p.value.data().begin(), p.value.data().end(), dst.mutable_data().begin());
  }
  model->set_stage(stage1.stage());
  train_stage2(*model, data, config.training, hooks);
  return model;
}

}  // namespace mere

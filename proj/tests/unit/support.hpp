// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit tests: small corpora, a tiny model
// configuration and conversions to the oracle's nested vectors.
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mere/corpus.hpp"
#include "mere/gradcheck.hpp"
#include "mere/generator.hpp"
#include "mere/model.hpp"
#include "mere/pipeline.hpp"
#include "mere/rng.hpp"
#include "mere/training.hpp"
#include "mere/vocab.hpp"
#include "oracles.hpp"

namespace mere::test {

/// Default registry restricted to `codes`, each with the given resource size.
inline Registry small_registry(const std::vector<std::pair<std::string, std::size_t>>& codes) {
  nlohmann::json langs = default_languages_json();
  nlohmann::json kept = nlohmann::json::array();
  for (const auto& [code, size] : codes) {
    for (auto lang : langs["languages"]) {
      if (lang["code"] == code) {
        lang["resource_size"] = size;
        kept.push_back(lang);
      }
    }
  }
  langs["languages"] = kept;
  nlohmann::json schema = default_schema_json();
  nlohmann::json allowed = nlohmann::json::object();
  for (const auto& [code, size] : codes) allowed[code] = schema["allowed"][code];
  schema["allowed"] = allowed;
  return registry_from_json(langs, schema);
}

inline Dataset small_dataset(const std::vector<std::pair<std::string, std::size_t>>& codes, std::uint64_t seed = 1,
                             std::size_t max_len = 24) {
  GeneratorConfig gen;
  gen.seed = seed;
  GeneratedCorpus corpus = generate_corpus(small_registry(codes), gen);
  Vocab vocab = build_vocab(corpus.registry, corpus.splits);
  return Dataset::make(corpus.registry, std::move(vocab), corpus.splits, max_len, true);
}

/// d=8, one 2-head block, T=3 sub-modules.
inline ModelConfig tiny_config(const Dataset& data, std::size_t d = 8) {
  ModelConfig c;
  c.encoder.vocab_size = data.vocab.size();
  c.encoder.d = d;
  c.encoder.blocks = 1;
  c.encoder.heads = 2;
  c.encoder.ffn = 2 * d;
  c.encoder.max_len = 24;
  c.switcher.layers = {1, 2, 1};
  c.switcher.bottleneck = 2 * d;
  c.num_languages = data.registry.num_languages();
  c.num_relations = data.registry.schema.size();
  return c;
}

/// Run config matching tiny_config.
inline RunConfig tiny_run(const std::string& corpus = "") {
  RunConfig c;
  c.corpus = corpus;
  c.model = {{"d", 8},           {"blocks", 1},      {"heads", 2},        {"ffn", 16},
             {"max_len", 24},    {"lang_token", true}, {"expert_layers", {1, 2, 1}}, {"bottleneck", 16},
             {"routing", "learned"}, {"router_init", 1.0}, {"relation_source", "encoder"}};
  c.training.stage1_epochs = 2;
  c.training.stage2_max_epochs = 2;
  c.training.batch_size = 8;
  c.training.log_every = 0;
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mere-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.rows(), oracle::Vector(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  }
  return m;
}

inline oracle::Vector to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

/// Two languages, four content words, sentences of at most six positions.
inline Dataset toy_dataset() {
  Registry reg = small_registry({{"en", 4}, {"ko", 4}});
  const std::size_t born = reg.schema.index_of("born-in"), genre = reg.schema.index_of("has-genre");
  Splits splits;
  splits.train = {{"t0", 0, {"p", "q", "r"}, {0, 0}, {2, 2}, born},
                  {"t1", 1, {"s", "p", "q"}, {0, 1}, {2, 2}, genre},
                  {"t2", 0, {"r", "s"}, kSentinelSpan, kSentinelSpan, 0},
                  {"t3", 1, {"q", "r", "s"}, {1, 1}, {2, 2}, born}};
  splits.dev = {{"d0", 0, {"p", "s", "r"}, {0, 0}, {2, 2}, born}, {"d1", 1, {"q", "s"}, kSentinelSpan, kSentinelSpan, 0}};
  splits.test = splits.dev;
  return Dataset::make(reg, Vocab(2, {"p", "q", "r", "s"}), splits, 24, true);
}

inline std::vector<Tensor> unfrozen(const Model& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.params().parameters()) {
    if (!p.frozen) out.push_back(p.value);
  }
  return out;
}

/// The stage-1 objective for one group, as the trainer computes it.
inline Tensor stage1_group_loss(const Model& model, const Dataset& data, const std::vector<std::size_t>& members,
                         double alpha, double beta) {
  std::vector<EncoderOutput> enc;
  std::vector<Tensor> hidden;
  std::vector<std::vector<bool>> masks;
  for (std::size_t i : members) {
    enc.push_back(model.encoder().encode(data.train[i]));
    hidden.push_back(enc.back().hidden);
    masks.push_back(data.train[i].attention_mask);
  }
  const auto agg = model.aggregator().aggregate(hidden, masks);
  std::vector<EreLossTerms> terms;
  for (std::size_t i = 0; i < members.size(); ++i) {
    terms.push_back(sentence_loss_terms(model, data.train[members[i]], enc[i].pooled, agg.outputs[i]));
  }
  return loss_ere(terms, alpha, beta);
}

inline Tensor stage2_loss(const Model& model, const Dataset& data, const std::vector<std::size_t>& members) {
  std::vector<EreLossTerms> terms;
  for (std::size_t i : members) {
    const auto base = model.base_features(data.train[i]);
    const Tensor features = model.switcher().forward(base.aggregated, data.train[i].lang, SwitchMode::train());
    terms.push_back(sentence_loss_terms(model, data.train[i], base.pooled, features));
  }
  return loss_ere(terms, 2.0, 1.0);
}

inline void perturb(Model& model, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& p : model.params().parameters()) {
    for (double& x : Tensor(p.value).mutable_data()) x += rng.normal(0.0, 0.2);
  }
}

inline std::vector<std::vector<double>> frozen_values(const Model& model, const FreezePlan& plan) {
  std::vector<std::vector<double>> out;
  for (const auto& name : plan.frozen) {
    const auto data = model.params().get(name).data();
    out.emplace_back(data.begin(), data.end());
  }
  return out;
}

}  // namespace mere::test

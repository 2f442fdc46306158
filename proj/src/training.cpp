// SPDX-License-Identifier: Apache-2.0
#include "mere/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "mere/errors.hpp"
#include "mere/ops.hpp"
#include "mere/rng.hpp"

namespace mere {

using nlohmann::json;

void TrainingConfig::validate(std::size_t experts) const {
  if (!(alpha > 0.0)) throw ConfigError("training.alpha must be > 0");
  if (!(beta > 0.0)) throw ConfigError("training.beta must be > 0");
  if (concat_count == 0) throw ConfigError("training.concat_count must be >= 1");
  if (batch_size == 0) throw ConfigError("training.batch_size must be >= 1");
  if (eval_k == 0 || eval_k > experts) {
    throw ConfigError("training.eval_k must lie in [1, " + std::to_string(experts) + "]");
  }
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
  if (optimizer.weight_decay < 0.0) throw ConfigError("training.weight_decay must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("training.clip_norm must be >= 0");
}

json TrainingConfig::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"concat_count", concat_count},
          {"stage1_epochs", stage1_epochs},
          {"stage2_max_epochs", stage2_max_epochs},
          {"patience", patience},
          {"batch_size", batch_size},
          {"learning_rate", optimizer.learning_rate},
          {"weight_decay", optimizer.weight_decay},
          {"beta1", optimizer.beta1},
          {"beta2", optimizer.beta2},
          {"epsilon", optimizer.epsilon},
          {"clip_norm", clip_norm},
          {"seed", seed},
          {"eval_k", eval_k},
          {"log_every", log_every}};
}

TrainingConfig TrainingConfig::from_json(const json& doc) {
  TrainingConfig c;
  try {
    c.alpha = doc.value("alpha", c.alpha);
    c.beta = doc.value("beta", c.beta);
    c.concat_count = doc.value("concat_count", c.concat_count);
    c.stage1_epochs = doc.value("stage1_epochs", c.stage1_epochs);
    c.stage2_max_epochs = doc.value("stage2_max_epochs", c.stage2_max_epochs);
    c.patience = doc.value("patience", c.patience);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.optimizer.learning_rate = doc.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.weight_decay = doc.value("weight_decay", c.optimizer.weight_decay);
    c.optimizer.beta1 = doc.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = doc.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = doc.value("epsilon", c.optimizer.epsilon);
    c.clip_norm = doc.value("clip_norm", c.clip_norm);
    c.seed = doc.value("seed", c.seed);
    c.eval_k = doc.value("eval_k", c.eval_k);
    c.log_every = doc.value("log_every", c.log_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

Dataset Dataset::make(Registry registry, Vocab vocab, Splits splits, std::size_t max_len, bool lang_token) {
  Dataset d;
  d.registry = std::move(registry);
  d.vocab = std::move(vocab);
  d.splits = std::move(splits);
  if (d.vocab.num_languages() != d.registry.num_languages()) {
    throw DataError("vocabulary reserves " + std::to_string(d.vocab.num_languages()) + " language tokens for " +
                    std::to_string(d.registry.num_languages()) + " languages");
  }
  d.train = tokenize_all(d.splits.train, d.vocab, max_len, lang_token);
  d.dev = tokenize_all(d.splits.dev, d.vocab, max_len, lang_token);
  d.test = tokenize_all(d.splits.test, d.vocab, max_len, lang_token);
  return d;
}

Dataset Dataset::load(const std::string& dir, std::size_t max_len, bool lang_token) {
  namespace fs = std::filesystem;
  const std::string reg_path = (fs::path(dir) / "registry.json").string();
  Registry registry = load_registry(reg_path, reg_path);
  Vocab vocab = Vocab::load((fs::path(dir) / "vocab.txt").string(), registry.num_languages());
  Splits splits;
  splits.train = load_examples((fs::path(dir) / "train.txt").string(), registry);
  splits.dev = load_examples((fs::path(dir) / "dev.txt").string(), registry);
  splits.test = load_examples((fs::path(dir) / "test.txt").string(), registry);
  return make(std::move(registry), std::move(vocab), std::move(splits), max_len, lang_token);
}

Dataset Dataset::restrict_to(const std::set<std::size_t>& languages) const {
  Dataset d;
  d.registry = registry;
  d.vocab = vocab;
  auto filter = [&](const std::vector<Example>& ex, const std::vector<TokenizedSentence>& ts,
                    std::vector<Example>& ex_out, std::vector<TokenizedSentence>& ts_out) {
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (!languages.count(ex[i].lang)) continue;
      ex_out.push_back(ex[i]);
      ts_out.push_back(ts[i]);
    }
  };
  filter(splits.train, train, d.splits.train, d.train);
  filter(splits.dev, dev, d.splits.dev, d.dev);
  filter(splits.test, test, d.splits.test, d.test);
  return d;
}

void save_dataset(const std::string& dir, const Registry& registry, const Vocab& vocab, const Splits& splits) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_registry((fs::path(dir) / "registry.json").string(), registry);
  vocab.save((fs::path(dir) / "vocab.txt").string());
  save_examples((fs::path(dir) / "train.txt").string(), splits.train, registry);
  save_examples((fs::path(dir) / "dev.txt").string(), splits.dev, registry);
  save_examples((fs::path(dir) / "test.txt").string(), splits.test, registry);
}

Tensor loss_ere(std::span<const EreLossTerms> terms, double alpha, double beta) {
  if (terms.empty()) throw DimensionError("loss_ere: empty batch");
  Tensor total;
  auto accumulate = [&](const Tensor& t) { total = total.defined() ? add(total, t) : t; };
  for (const auto& term : terms) {
    accumulate(scale(term.relation, beta));
    if (term.entity) {
      for (const auto& e : *term.entity) accumulate(scale(e, alpha / 2.0));
    }
  }
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

EreLossTerms sentence_loss_terms(const Model& model, const TokenizedSentence& s, const Tensor& pooled,
                                 const Tensor& features) {
  EreLossTerms terms;
  const BaseFeatures base{pooled, features};
  terms.relation = cross_entropy(model.relation_logits(base, features), s.relation);
  if (s.relation != 0) {
    const auto scores = model.entity_heads().scores(features, model.relation_head().embedding(s.relation));
    const auto mask = s.position_mask();
    const std::size_t gold[4] = {static_cast<std::size_t>(s.head.start), static_cast<std::size_t>(s.head.end),
                                 static_cast<std::size_t>(s.tail.start), static_cast<std::size_t>(s.tail.end)};
    std::array<Tensor, 4> entity;
    for (std::size_t y = 0; y < 4; ++y) entity[y] = cross_entropy(scores[y], gold[y], mask);
    terms.entity = entity;
  }
  return terms;
}

FreezePlan FreezePlan::stage2(const ParamStore& store) {
  FreezePlan plan;
  for (const auto& p : store.parameters()) {
    const bool frozen = p.name.rfind("encoder.", 0) == 0 || p.name.rfind("aggregator.", 0) == 0;
    (frozen ? plan.frozen : plan.trainable).push_back(p.name);
  }
  return plan;
}

void FreezePlan::validate(const ParamStore& store) const {
  std::set<std::string> seen;
  for (const auto* group : {&frozen, &trainable}) {
    for (const auto& name : *group) {
      if (!store.contains(name)) throw ConfigError("freeze plan names unknown parameter '" + name + "'");
      if (!seen.insert(name).second) throw ConfigError("freeze plan lists '" + name + "' twice");
    }
  }
  if (seen.size() != store.size()) throw ConfigError("freeze plan does not cover every parameter");
}

void FreezePlan::apply(ParamStore& store) const {
  validate(store);
  for (const auto& name : frozen) store.set_frozen(name, true);
  for (const auto& name : trainable) store.set_frozen(name, false);
}

namespace {

struct StepStats {
  double loss = 0.0;
  double relation = 0.0;
  double entity = 0.0;
};

StepStats component_stats(std::span<const EreLossTerms> terms, const Tensor& loss) {
  StepStats st;
  st.loss = loss.item();
  for (const auto& t : terms) {
    st.relation += t.relation.item();
    if (t.entity) {
      for (const auto& e : *t.entity) st.entity += e.item();
    }
  }
  st.relation /= static_cast<double>(terms.size());
  st.entity /= static_cast<double>(terms.size());
  return st;
}

std::string format_log(int stage, std::size_t epoch, std::size_t step, const StepStats& st, double lr) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "stage=%d epoch=%zu step=%zu loss=%.6f relation=%.6f entity=%.6f lr=%g", stage,
                epoch, step, st.loss, st.relation, st.entity, lr);
  return buf;
}

void log_line(const TrainHooks& hooks, const std::string& line) {
  if (hooks.log) hooks.log(line);
}

void optimizer_step(Model& model, AdamW& optimizer, const TrainingConfig& config, std::span<const EreLossTerms> terms,
                    Tape& tape, Tensor& loss, int stage, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss.item())) {
    const StepStats st = component_stats(terms, loss);
    char buf[200];
    std::snprintf(buf, sizeof buf, "non-finite loss at stage %d epoch %zu step %zu (relation=%g entity=%g)", stage,
                  epoch, step, st.relation, st.entity);
    throw NumericalError(buf);
  }
  model.params().zero_grad();
  tape.backward(loss);
  if (config.clip_norm > 0.0) clip_grad_norm(model.params(), config.clip_norm);
  optimizer.step(model.params());
}

}  // namespace

StageResult train_stage1(Model& model, AdamW& optimizer, const Dataset& data, const TrainingConfig& config,
                         std::size_t start_epoch, const TrainHooks& hooks) {
  config.validate(model.switcher().experts());
  if (data.train.empty()) throw DataError("stage 1: empty training split");
  const Stage1Sampler sampler(data.splits.train, config.concat_count);
  // The switcher is not part of the stage-1 graph; freezing it keeps weight
  // decay off its initial values.
  for (const auto& p : model.params().parameters()) {
    const bool unused = p.name.rfind("switcher.", 0) == 0 || p.name.rfind("router.", 0) == 0;
    model.params().set_frozen(p.name, unused);
  }

  const std::size_t groups_per_step = std::max<std::size_t>(1, config.batch_size / config.concat_count);
  const std::size_t steps_per_epoch = (data.train.size() + config.batch_size - 1) / config.batch_size;
  StageResult result;
  result.steps = optimizer.step_count();
  for (std::size_t epoch = start_epoch + 1; epoch <= config.stage1_epochs; ++epoch) {
    Rng rng(mix_seed(mix_seed(config.seed, 1), epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto groups = sampler.draw_batch(groups_per_step, rng);
      Tape tape;
      std::vector<EreLossTerms> terms;
      Tensor loss;
      {
        TapeScope scope(tape);
        for (const auto& group : groups) {
          std::vector<EncoderOutput> enc;
          std::vector<Tensor> hidden;
          std::vector<std::vector<bool>> masks;
          for (std::size_t idx : group.members) {
            enc.push_back(model.encoder().encode(data.train[idx]));
            hidden.push_back(enc.back().hidden);
            masks.push_back(data.train[idx].attention_mask);
          }
          const AggregateResult agg = model.aggregator().aggregate(hidden, masks);
          for (std::size_t i = 0; i < group.members.size(); ++i) {
            terms.push_back(sentence_loss_terms(model, data.train[group.members[i]], enc[i].pooled, agg.outputs[i]));
          }
        }
        loss = loss_ere(terms, config.alpha, config.beta);
      }
      const StepStats st = component_stats(terms, loss);
      optimizer_step(model, optimizer, config, terms, tape, loss, 1, epoch, optimizer.step_count() + 1);
      ++rec.steps;
      rec.loss += st.loss;
      rec.relation += st.relation;
      rec.entity += st.entity;
      if (config.log_every && optimizer.step_count() % config.log_every == 0) {
        log_line(hooks, format_log(1, epoch, optimizer.step_count(), st, optimizer.config().learning_rate));
      }
    }
    rec.loss /= static_cast<double>(rec.steps);
    rec.relation /= static_cast<double>(rec.steps);
    rec.entity /= static_cast<double>(rec.steps);
    result.epochs.push_back(rec);
    char buf[160];
    std::snprintf(buf, sizeof buf, "stage=1 epoch=%zu done steps=%zu mean_loss=%.6f", epoch, optimizer.step_count(),
                  rec.loss);
    log_line(hooks, buf);
    model.set_stage(epoch == config.stage1_epochs ? 1 : 0);
    if (hooks.epoch_end) hooks.epoch_end(model, optimizer, epoch);
  }
  model.set_stage(1);
  result.steps = optimizer.step_count() - result.steps;
  return result;
}

StageResult train_stage2(Model& model, const Dataset& data, const TrainingConfig& config, const TrainHooks& hooks) {
  config.validate(model.switcher().experts());
  if (model.stage() < 1) throw ConfigError("stage 2 needs a completed stage-1 checkpoint");
  if (data.train.empty()) throw DataError("stage 2: empty training split");
  if (data.dev.empty()) throw DataError("stage 2: empty dev split (needed for early stopping)");
  const FreezePlan plan = FreezePlan::stage2(model.params());
  plan.apply(model.params());

  // Encoder and aggregator are frozen, so their outputs are fixed for the
  // whole stage.
  auto cache = [&](const std::vector<TokenizedSentence>& sentences) {
    std::vector<BaseFeatures> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(model.base_features(s));
    return out;
  };
  const std::vector<BaseFeatures> train_base = cache(data.train);
  const std::vector<BaseFeatures> dev_base = cache(data.dev);

  AdamW optimizer(config.optimizer);
  StageResult result;
  std::optional<double> best;
  std::vector<std::vector<double>> best_params;
  std::size_t stale = 0;
  const InferenceMode eval_mode{true, SwitchMode::eval(config.eval_k)};
  model.set_stage(2);
  for (std::size_t epoch = 1; epoch <= config.stage2_max_epochs; ++epoch) {
    Rng rng(mix_seed(mix_seed(config.seed, 2), epoch));
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Tape tape;
      std::vector<EreLossTerms> terms;
      Tensor loss;
      {
        TapeScope scope(tape);
        for (std::size_t i = begin; i < end; ++i) {
          const auto& s = data.train[order[i]];
          const auto& base = train_base[order[i]];
          const Tensor features = model.switcher().forward(base.aggregated, s.lang, SwitchMode::train());
          terms.push_back(sentence_loss_terms(model, s, base.pooled, features));
        }
        loss = loss_ere(terms, config.alpha, config.beta);
      }
      const StepStats st = component_stats(terms, loss);
      optimizer_step(model, optimizer, config, terms, tape, loss, 2, epoch, optimizer.step_count() + 1);
      ++rec.steps;
      rec.loss += st.loss;
      rec.relation += st.relation;
      rec.entity += st.entity;
      if (config.log_every && optimizer.step_count() % config.log_every == 0) {
        log_line(hooks, format_log(2, epoch, optimizer.step_count(), st, optimizer.config().learning_rate));
      }
    }
    rec.loss /= static_cast<double>(rec.steps);
    rec.relation /= static_cast<double>(rec.steps);
    rec.entity /= static_cast<double>(rec.steps);

    Evaluation dev = evaluate(model, data.registry, data.splits.dev, data.dev, eval_mode, &dev_base);
    rec.dev_triple_f1 = dev.report.macro.triple_f1;
    result.epochs.push_back(rec);
    char buf[200];
    std::snprintf(buf, sizeof buf, "stage=2 epoch=%zu done steps=%zu mean_loss=%.6f dev_triple_f1=%.6f", epoch,
                  optimizer.step_count(), rec.loss, *rec.dev_triple_f1);
    log_line(hooks, buf);
    if (!best || *rec.dev_triple_f1 > *best) {
      best = rec.dev_triple_f1;
      best_params = model.params().snapshot();
      result.best_epoch = epoch;
      result.dev_report = std::move(dev.report);
      stale = 0;
    } else if (++stale >= config.patience && config.patience > 0) {
      log_line(hooks, "stage=2 early stop at epoch " + std::to_string(epoch));
      break;
    }
  }
  result.steps = optimizer.step_count();
  if (!best_params.empty()) model.params().restore(best_params);
  return result;
}

CheckpointData training_checkpoint(const Model& model, const AdamW* optimizer, json meta) {
  if (optimizer) meta["optimizer_steps"] = optimizer->step_count();
  CheckpointData data = model.to_checkpoint(std::move(meta));
  if (optimizer) {
    for (const auto& [name, m] : optimizer->moments()) {
      const Shape shape = model.params().get(name).shape();
      data.tensors.push_back({"adamw.m/" + name, shape, m.first});
      data.tensors.push_back({"adamw.v/" + name, shape, m.second});
    }
  }
  return data;
}

void restore_optimizer(const CheckpointData& data, AdamW& optimizer) {
  std::map<std::string, AdamW::Moments> moments;
  for (const auto& t : data.tensors) {
    if (t.name.rfind("adamw.m/", 0) == 0) moments[t.name.substr(8)].first = t.values;
    if (t.name.rfind("adamw.v/", 0) == 0) moments[t.name.substr(8)].second = t.values;
  }
  for (const auto& [name, m] : moments) {
    if (m.first.size() != m.second.size()) throw DataError("checkpoint optimizer state for '" + name + "' is incomplete");
  }
  optimizer.load_state(data.meta.value("optimizer_steps", std::size_t{0}), std::move(moments));
}

InferenceMode default_inference(const Model& model, std::size_t k) {
  return InferenceMode{model.stage() >= 2, SwitchMode::eval(k)};
}

Evaluation evaluate(const Model& model, const Registry& registry, const std::vector<Example>& gold,
                    const std::vector<TokenizedSentence>& sentences, InferenceMode mode,
                    const std::vector<BaseFeatures>* cache) {
  if (gold.size() != sentences.size()) throw DataError("evaluate: gold and tokenized lists differ in length");
  if (cache && cache->size() != sentences.size()) throw DataError("evaluate: feature cache size mismatch");
  Evaluation ev;
  ev.predictions.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto mask = registry.schema.additive_mask(sentences[i].lang);
    ev.predictions.push_back(cache ? model.predict_from(sentences[i], (*cache)[i], mask, mode)
                                   : model.predict(sentences[i], mask, mode));
  }
  ev.report = build_report(registry, gold, ev.predictions);
  return ev;
}

}  // namespace mere

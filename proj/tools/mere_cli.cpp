// SPDX-License-Identifier: Apache-2.0
//
// mere: corpus generation, two-stage training, evaluation, ablations and
// router inspection.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
// failure. MERE_OUTPUT_ROOT sets the default output root (default "runs").
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mere/ablation.hpp"
#include "mere/errors.hpp"
#include "mere/generator.hpp"
#include "mere/metrics.hpp"
#include "mere/pipeline.hpp"
#include "mere/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mere;

namespace {

std::string output_root() {
  const char* env = std::getenv("MERE_OUTPUT_ROOT");
  return env && *env ? env : "runs";
}

std::string resolve_out(const std::string& out, const std::string& fallback) {
  const std::string dir = out.empty() ? (fs::path(output_root()) / fallback).string() : out;
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::trunc) {}
  void operator()(const std::string& line) {
    std::lock_guard<std::mutex> lock(mu_);
    out_ << line << '\n';
    out_.flush();
    std::cerr << line << '\n';
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

// generate ------------------------------------------------------------------

struct GenerateArgs {
  std::string langs, schema, out;
  std::uint64_t seed = 1;
  double no_relation_fraction = 0.1;
  double family_share = 0.4;
};

int cmd_generate(const GenerateArgs& a) {
  const json langs = a.langs.empty() ? default_languages_json() : read_json(a.langs);
  const json schema = a.schema.empty() ? (a.langs.empty() ? default_schema_json() : langs) : read_json(a.schema);
  const Registry registry = registry_from_json(langs, schema);
  GeneratorConfig cfg;
  cfg.seed = a.seed;
  cfg.no_relation_fraction = a.no_relation_fraction;
  cfg.family_share = a.family_share;
  const GeneratedCorpus corpus = generate_corpus(registry, cfg);
  const Vocab vocab = build_vocab(corpus.registry, corpus.splits);
  const std::string dir = resolve_out(a.out, "corpus");
  save_dataset(dir, corpus.registry, vocab, corpus.splits);

  std::printf("%-6s %6s %6s %6s\n", "lang", "train", "dev", "test");
  for (const auto& l : corpus.registry.languages) {
    std::size_t n[3] = {0, 0, 0};
    const std::vector<Example>* parts[] = {&corpus.splits.train, &corpus.splits.dev, &corpus.splits.test};
    for (int s = 0; s < 3; ++s) {
      for (const auto& ex : *parts[s]) n[s] += ex.lang == l.id;
    }
    std::printf("%-6s %6zu %6zu %6zu\n", l.code.c_str(), n[0], n[1], n[2]);
  }
  std::printf("vocabulary: %zu tokens\nwrote %s\n", vocab.size(), dir.c_str());
  return 0;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  int stage = 1;
  std::string config, resume, out;
  std::vector<std::string> overrides;
};

json resolved_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = path.empty() ? default_run_config() : load_run_config(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

json stage_summary(const StageResult& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json rec = {{"epoch", e.epoch}, {"steps", e.steps}, {"loss", e.loss}, {"relation", e.relation}, {"entity", e.entity}};
    if (e.dev_triple_f1) rec["dev_triple_f1"] = *e.dev_triple_f1;
    epochs.push_back(rec);
  }
  return {{"steps", r.steps}, {"best_epoch", r.best_epoch}, {"epochs", epochs}};
}

int cmd_train(const TrainArgs& a) {
  if (a.stage != 1 && a.stage != 2) throw ConfigError("--stage must be 1 or 2");
  if (a.stage == 2 && a.resume.empty()) throw ConfigError("stage 2 needs --resume <stage-1 checkpoint>");
  const json doc = resolved_config(a.config, a.overrides);
  const RunConfig config = RunConfig::from_json(doc);
  const std::string dir = resolve_out(a.out, "stage" + std::to_string(a.stage));
  write_text(fs::path(dir) / "config.resolved.json", doc.dump(2) + "\n");
  const std::string hash = config_hash(doc);
  const Dataset data = load_dataset(config);
  RunLog log(fs::path(dir) / "train.log");
  TrainHooks hooks;
  hooks.log = [&log](const std::string& line) { log(line); };

  json meta = {{"config", doc}, {"config_hash", hash}, {"registry", registry_to_json(data.registry)}};
  json summary = {{"stage", a.stage}, {"config_hash", hash}};
  std::unique_ptr<Model> model;
  if (a.stage == 1) {
    AdamW optimizer(config.training.optimizer);
    std::size_t start_epoch = 0;
    if (!a.resume.empty()) {
      const CheckpointData ckpt = read_checkpoint(a.resume);
      if (ckpt.meta.value("training_stage", 0) != 1) throw ConfigError(a.resume + " is not a stage-1 checkpoint");
      model = Model::from_checkpoint(ckpt);
      if (model->config().to_json() != config.model_config(data).to_json()) {
        throw ConfigError("checkpoint model config does not match the run config");
      }
      restore_optimizer(ckpt, optimizer);
      start_epoch = ckpt.meta.value("epochs_completed", std::size_t{0});
      log("stage=1 resuming after epoch " + std::to_string(start_epoch));
    } else {
      model = std::make_unique<Model>(config.model_config(data), config.training.seed);
    }
    hooks.epoch_end = [&](const Model& m, const AdamW& opt, std::size_t epochs) {
      json epoch_meta = meta;
      epoch_meta["training_stage"] = 1;
      epoch_meta["epochs_completed"] = epochs;
      write_checkpoint((fs::path(dir) / "last.ckpt").string(), training_checkpoint(m, &opt, epoch_meta));
    };
    const StageResult result = train_stage1(*model, optimizer, data, config.training, start_epoch, hooks);
    meta["training_stage"] = 1;
    meta["epochs_completed"] = config.training.stage1_epochs;
    write_checkpoint((fs::path(dir) / "checkpoint.ckpt").string(), training_checkpoint(*model, &optimizer, meta));
    summary["training"] = stage_summary(result);
  } else {
    const CheckpointData ckpt = read_checkpoint(a.resume);
    if (ckpt.meta.value("stage", 0) != 1) throw ConfigError(a.resume + " is not a completed stage-1 checkpoint");
    model = Model::from_checkpoint(ckpt);
    if (model->config().to_json() != config.model_config(data).to_json()) {
      throw ConfigError("checkpoint model config does not match the run config");
    }
    const StageResult result = train_stage2(*model, data, config.training, hooks);
    meta["training_stage"] = 2;
    write_checkpoint((fs::path(dir) / "checkpoint.ckpt").string(), training_checkpoint(*model, nullptr, meta));
    write_text(fs::path(dir) / "router_heatmap.csv", export_router_heatmap(*model, data.registry).to_csv());
    summary["training"] = stage_summary(result);
  }
  const Evaluation dev = evaluate(*model, data.registry, data.splits.dev, data.dev,
                                  default_inference(*model, config.training.eval_k));
  summary["dev"] = dev.report.to_json();
  summary["dev"].erase("config");
  write_text(fs::path(dir) / "summary.json", summary.dump(2) + "\n");
  std::printf("%s", dev.report.to_text().c_str());
  std::printf("wrote %s\n", dir.c_str());
  return 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, corpus, out, split = "test";
  std::size_t topk = 0;
  bool soft = false;
  bool dump_scores = false;
};

int cmd_eval(const EvalArgs& a) {
  const CheckpointData ckpt = read_checkpoint(a.ckpt);
  auto model = Model::from_checkpoint(ckpt);
  const std::size_t experts = model->switcher().experts();
  std::size_t k = a.topk;
  if (k == 0) {
    k = ckpt.meta.contains("config") ? ckpt.meta["config"]["training"].value("eval_k", std::size_t{3}) : 3;
    k = std::min(k, experts);
  }
  if (k < 1 || k > experts) {
    throw ConfigError("--topk must lie in [1, " + std::to_string(experts) + "]");
  }
  const Dataset data = Dataset::load(a.corpus, model->config().encoder.max_len, model->config().lang_token);
  if (data.vocab.size() != model->config().encoder.vocab_size) {
    throw DataError("corpus vocabulary does not match the checkpoint");
  }
  const std::vector<Example>* gold = &data.splits.test;
  const std::vector<TokenizedSentence>* sentences = &data.test;
  if (a.split == "dev") {
    gold = &data.splits.dev;
    sentences = &data.dev;
  } else if (a.split == "train") {
    gold = &data.splits.train;
    sentences = &data.train;
  } else if (a.split != "test") {
    throw ConfigError("--split must be train, dev or test");
  }
  InferenceMode mode = default_inference(*model, k);
  if (a.soft) mode.switch_mode = SwitchMode::train();
  const Evaluation ev = evaluate(*model, data.registry, *gold, *sentences, mode);
  MetricsReport report = ev.report;
  report.config = {{"checkpoint", a.ckpt}, {"corpus", a.corpus}, {"split", a.split}, {"stage", model->stage()},
                   {"switcher", mode.use_switcher}, {"mixing", a.soft ? "soft" : "top-k"}, {"k", k}};
  const std::string dir = resolve_out(a.out, "eval");
  write_text(fs::path(dir) / "metrics.json", report.to_json().dump(2) + "\n");
  write_text(fs::path(dir) / "metrics.txt", report.to_text());
  write_text(fs::path(dir) / "relation_grid.csv", report.grid_csv());
  std::string dump;
  for (std::size_t i = 0; i < gold->size(); ++i) {
    dump += prediction_record(ev.predictions[i], (*gold)[i], data.registry, a.dump_scores) + "\n";
  }
  write_text(fs::path(dir) / "predictions.jsonl", dump);
  std::printf("%s", report.to_text().c_str());
  return 0;
}

// ablate --------------------------------------------------------------------

struct AblateArgs {
  std::string name, config, out;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
};

int cmd_ablate(const AblateArgs& a) {
  const json doc = resolved_config(a.config, a.overrides);
  const RunConfig config = RunConfig::from_json(doc);
  const std::string dir = resolve_out(a.out, "ablate");
  write_text(fs::path(dir) / "config.resolved.json", doc.dump(2) + "\n");
  const Dataset data = load_dataset(config);
  RunLog log(fs::path(dir) / (a.name + ".log"));
  const AblationTable table =
      run_ablation(a.name, config, data, a.jobs, [&log](const std::string& line) { log(line); });
  write_text(fs::path(dir) / (a.name + ".csv"), table.to_csv());
  std::printf("%s", table.to_csv().c_str());
  return 0;
}

// inspect-router ------------------------------------------------------------

struct InspectArgs {
  std::string ckpt, out;
};

int cmd_inspect(const InspectArgs& a) {
  const CheckpointData ckpt = read_checkpoint(a.ckpt);
  auto model = Model::from_checkpoint(ckpt);
  if (!ckpt.meta.contains("registry")) throw DataError("checkpoint carries no language registry");
  const json& reg = ckpt.meta.at("registry");
  const Registry registry = registry_from_json(reg, reg);
  const RouterHeatmap map = export_router_heatmap(*model, registry);
  const std::string csv = map.to_csv();
  if (!a.out.empty()) {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    write_text(a.out, csv);
  }
  std::printf("%s", csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mere: multilingual entity and relation extraction"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate the synthetic multilingual corpus");
  g->add_option("--langs", gen.langs, "Language registry JSON (default: built-in six languages)");
  g->add_option("--schema", gen.schema, "Relation schema JSON (default: same file as --langs)");
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--no-relation-fraction", gen.no_relation_fraction, "Share of no_relation sentences");
  g->add_option("--family-share", gen.family_share, "Probability a word sense is shared within a family");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run training stage 1 or 2");
  t->add_option("--stage", train.stage, "1 or 2")->required();
  t->add_option("--config", train.config, "Run config JSON");
  t->add_option("--resume", train.resume, "Checkpoint to continue from (required for stage 2)");
  t->add_option("--out", train.out, "Output directory");
  t->add_option("--set", train.overrides, "Config override key=value (repeatable)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  e->add_option("--split", ev.split, "train, dev or test");
  e->add_option("--topk", ev.topk, "Sub-modules kept at evaluation");
  e->add_flag("--soft", ev.soft, "Soft mixing over all sub-modules (training-mode switch)");
  e->add_flag("--dump-scores", ev.dump_scores, "Include per-position scores in predictions.jsonl");
  e->add_option("--out", ev.out, "Output directory");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Run an ablation sweep");
  b->add_option("--name", ab.name, "Ablation name")->required()->check(CLI::IsMember(ablation_names()));
  b->add_option("--config", ab.config, "Base run config JSON");
  b->add_option("--jobs", ab.jobs, "Variants trained concurrently")->check(CLI::PositiveNumber);
  b->add_option("--out", ab.out, "Output directory");
  b->add_option("--set", ab.overrides, "Config override key=value (repeatable)");

  InspectArgs ins;
  auto* r = app.add_subcommand("inspect-router", "Export router probabilities as CSV");
  r->add_option("--ckpt", ins.ckpt, "Stage-2 checkpoint")->required();
  r->add_option("--out", ins.out, "CSV path (default: stdout only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_ablate(ab);
    if (*r) return cmd_inspect(ins);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const DimensionError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const NumericalError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ExitCode::kNumerical);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ExitCode::kInternal);
  }
  return 0;
}

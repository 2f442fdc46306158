// SPDX-License-Identifier: Apache-2.0
#include "mere/generator.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "mere/errors.hpp"
#include "mere/rng.hpp"

namespace mere {

using nlohmann::json;

json default_languages_json() {
  return json::parse(R"({
    "schema_version": 1,
    "languages": [
      {"code": "en", "word_order": "SVO", "family": "euro", "resource_size": 1200},
      {"code": "it", "word_order": "SVO", "family": "euro", "resource_size": 800},
      {"code": "de", "word_order": "SVO", "family": "euro", "resource_size": 500},
      {"code": "ko", "word_order": "SOV", "family": "koreanic", "resource_size": 300},
      {"code": "ar", "word_order": "VSO", "family": "semitic", "resource_size": 200},
      {"code": "uk", "word_order": "SVO", "family": "euro", "resource_size": 150}
    ]
  })");
}

json default_schema_json() {
  return json::parse(R"({
    "schema_version": 1,
    "relations": [
      {"name": "no_relation"},
      {"name": "has-genre", "template": {"subject": "artwork", "object": "genre", "cues": 2}},
      {"name": "has-author", "template": {"subject": "artwork", "object": "person", "cues": 2}},
      {"name": "born-in", "template": {"subject": "person", "object": "location", "cues": 2}},
      {"name": "located-in", "template": {"subject": "location", "object": "location", "cues": 2}},
      {"name": "founded-by", "template": {"subject": "org", "object": "person", "cues": 2}},
      {"name": "member-of", "template": {"subject": "person", "object": "org", "cues": 2}},
      {"name": "has-child", "template": {"subject": "person", "object": "person", "cues": 2}},
      {"name": "headquartered-in", "template": {"subject": "org", "object": "location", "cues": 2}},
      {"name": "won-award", "template": {"subject": "person", "object": "award", "cues": 2}}
    ],
    "allowed": {
      "en": "all",
      "it": "all",
      "de": "all",
      "ko": ["has-genre", "has-author", "born-in", "located-in", "member-of",
             "headquartered-in", "won-award"],
      "ar": ["has-genre", "has-author", "born-in", "founded-by", "member-of",
             "has-child", "headquartered-in"],
      "uk": ["has-genre", "has-author", "born-in", "located-in", "founded-by",
             "has-child", "won-award"]
    }
  })");
}

Registry default_registry() { return registry_from_json(default_languages_json(), default_schema_json()); }

std::array<std::size_t, 3> split_sizes(std::size_t total, double train_ratio, double dev_ratio) {
  auto train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(total)));
  auto dev = static_cast<std::size_t>(std::llround(dev_ratio * static_cast<double>(total)));
  train = std::min(train, total);
  dev = std::min(dev, total - train);
  return {train, dev, total - train - dev};
}

std::string lexicon_word(const LanguageSpec& lang, const std::string& sense, double family_share,
                         std::uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a(lang.family + "/" + sense)));
  const std::string owner = rng.bernoulli(family_share) ? lang.family : lang.code;
  return owner + ":" + sense;
}

namespace {

constexpr const char* kEntityTypes[] = {"person", "location", "org", "artwork", "genre", "award"};

struct Lexicon {
  std::vector<std::vector<std::string>> cues;  // per relation
  std::string subj_marker;
  std::string obj_marker;
  std::string passive;
  std::string agent;
  std::vector<std::string> fillers;
  std::vector<std::string> prepositions;
  std::vector<std::string> neutral;
};

Lexicon build_lexicon(const LanguageSpec& lang, const RelationSchema& schema, const GeneratorConfig& cfg) {
  auto word = [&](const std::string& sense) {
    return lexicon_word(lang, sense, cfg.family_share, cfg.seed);
  };
  Lexicon lex;
  lex.cues.resize(schema.size());
  for (std::size_t r = 1; r < schema.size(); ++r) {
    for (std::size_t j = 0; j < schema.templates[r]->cues; ++j) {
      lex.cues[r].push_back(word("rel." + schema.relations[r] + "." + std::to_string(j)));
    }
  }
  lex.subj_marker = word("subj");
  lex.obj_marker = word("obj");
  lex.passive = word("passive");
  lex.agent = word("agent");
  for (std::size_t j = 0; j < cfg.fillers; ++j) lex.fillers.push_back(word("fill." + std::to_string(j)));
  for (std::size_t j = 0; j < cfg.prepositions; ++j) lex.prepositions.push_back(word("prep." + std::to_string(j)));
  for (std::size_t j = 0; j < cfg.neutral_cues; ++j) lex.neutral.push_back(word("none." + std::to_string(j)));
  return lex;
}

std::vector<std::string> lexicon_words(const Lexicon& lex) {
  std::vector<std::string> out;
  for (const auto& c : lex.cues) out.insert(out.end(), c.begin(), c.end());
  out.push_back(lex.subj_marker);
  out.push_back(lex.obj_marker);
  out.push_back(lex.passive);
  out.push_back(lex.agent);
  out.insert(out.end(), lex.fillers.begin(), lex.fillers.end());
  out.insert(out.end(), lex.prepositions.begin(), lex.prepositions.end());
  out.insert(out.end(), lex.neutral.begin(), lex.neutral.end());
  return out;
}

std::vector<std::string> entity_name(const std::string& type, std::size_t pool, Rng& rng) {
  const double u = rng.uniform();
  const std::size_t pieces = u < 0.5 ? 1 : (u < 0.8 ? 2 : 3);
  std::vector<std::string> name;
  for (std::size_t i = 0; i < pieces; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%02zu", rng.below(pool));
    name.push_back("@" + type + buf);
  }
  return name;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += p + " ";
  return out;
}

struct Frame {
  std::size_t relation = 0;
  std::vector<std::string> subject;
  std::vector<std::string> object;
  std::string key() const { return std::to_string(relation) + "|" + join(subject) + "|" + join(object); }
};

Frame draw_frame(std::size_t lang, const RelationSchema& schema, const GeneratorConfig& cfg, Rng& rng) {
  Frame f;
  if (!rng.bernoulli(cfg.no_relation_fraction)) {
    std::vector<std::size_t> choices;
    for (std::size_t r = 1; r < schema.size(); ++r) {
      if (schema.is_allowed(lang, r)) choices.push_back(r);
    }
    f.relation = choices[rng.below(choices.size())];
  }
  if (f.relation == 0) {
    f.subject = entity_name(kEntityTypes[rng.below(std::size(kEntityTypes))], cfg.entity_pool, rng);
    f.object = entity_name(kEntityTypes[rng.below(std::size(kEntityTypes))], cfg.entity_pool, rng);
  } else {
    const auto& tpl = *schema.templates[f.relation];
    f.subject = entity_name(tpl.subject_type, cfg.entity_pool, rng);
    f.object = entity_name(tpl.object_type, cfg.entity_pool, rng);
  }
  return f;
}

Example render(const Frame& f, const LanguageSpec& lang, const Lexicon& lex, const GeneratorConfig& cfg,
               Rng& rng) {
  Example ex;
  ex.lang = lang.id;
  ex.relation = f.relation;
  auto& toks = ex.tokens;
  auto put_entity = [&](const std::vector<std::string>& name) {
    Span s{static_cast<int>(toks.size()), static_cast<int>(toks.size() + name.size()) - 1};
    toks.insert(toks.end(), name.begin(), name.end());
    return s;
  };
  const std::string cue = f.relation == 0 ? lex.neutral[rng.below(lex.neutral.size())]
                                          : lex.cues[f.relation][rng.below(lex.cues[f.relation].size())];
  auto put_adjunct = [&]() {
    toks.push_back(lex.prepositions[rng.below(lex.prepositions.size())]);
    put_entity(entity_name(kEntityTypes[rng.below(std::size(kEntityTypes))], cfg.entity_pool, rng));
  };
  const bool adjunct = rng.bernoulli(cfg.distractor_prob);
  const bool fronted = adjunct && rng.bernoulli(0.5);
  if (rng.bernoulli(cfg.filler_prob)) toks.push_back(lex.fillers[rng.below(lex.fillers.size())]);
  if (fronted) {
    put_adjunct();
    toks.push_back(",");
  }
  const bool alternate = rng.bernoulli(cfg.alternation_prob);
  Span head, tail;
  switch (lang.word_order) {
    case WordOrder::kSVO:
      if (alternate) {
        tail = put_entity(f.object);
        toks.push_back(lex.passive);
        toks.push_back(cue);
        toks.push_back(lex.agent);
        head = put_entity(f.subject);
      } else {
        head = put_entity(f.subject);
        toks.push_back(cue);
        tail = put_entity(f.object);
      }
      break;
    case WordOrder::kSOV:
      if (alternate) {
        tail = put_entity(f.object);
        toks.push_back(lex.obj_marker);
        head = put_entity(f.subject);
        toks.push_back(lex.subj_marker);
      } else {
        head = put_entity(f.subject);
        toks.push_back(lex.subj_marker);
        tail = put_entity(f.object);
        toks.push_back(lex.obj_marker);
      }
      toks.push_back(cue);
      break;
    case WordOrder::kVSO:
      toks.push_back(cue);
      if (alternate) {
        tail = put_entity(f.object);
        toks.push_back(lex.obj_marker);
        head = put_entity(f.subject);
        toks.push_back(lex.subj_marker);
      } else {
        head = put_entity(f.subject);
        toks.push_back(lex.subj_marker);
        tail = put_entity(f.object);
        toks.push_back(lex.obj_marker);
      }
      break;
  }
  if (adjunct && !fronted) put_adjunct();
  if (f.relation != 0) {
    ex.head = head;
    ex.tail = tail;
  }
  return ex;
}

}  // namespace

GeneratedCorpus generate_corpus(const Registry& registry, const GeneratorConfig& config) {
  registry.validate();
  const auto& schema = registry.schema;
  for (std::size_t r = 1; r < schema.size(); ++r) {
    if (!schema.templates[r]) {
      throw ConfigError("relation '" + schema.relations[r] + "' has no surface template");
    }
  }
  if (config.no_relation_fraction < 0.0 || config.no_relation_fraction > 1.0) {
    throw ConfigError("no_relation_fraction must lie in [0, 1]");
  }
  for (double p : {config.family_share, config.filler_prob, config.distractor_prob, config.alternation_prob}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("generator probabilities must lie in [0, 1]");
  }
  if (config.entity_pool == 0 || config.fillers == 0 || config.prepositions == 0 || config.neutral_cues == 0) {
    throw ConfigError("generator inventories must be non-empty");
  }
  if (config.train_ratio < 0 || config.dev_ratio < 0 || config.train_ratio + config.dev_ratio > 1.0) {
    throw ConfigError("split ratios must be nonnegative and sum to at most 1");
  }

  GeneratedCorpus out;
  out.registry = registry;
  std::map<std::string, int> frame_split;
  for (auto& lang : out.registry.languages) {
    if (lang.resource_size == 0) throw ConfigError("language '" + lang.code + "' has resource_size 0");
    const Lexicon lex = build_lexicon(lang, schema, config);
    lang.vocab = lexicon_words(lex);

    Rng rng(mix_seed(config.seed, fnv1a("corpus/" + lang.code)));
    const auto sizes = split_sizes(lang.resource_size, config.train_ratio, config.dev_ratio);
    const char* split_names[] = {"train", "dev", "test"};
    std::vector<Example>* targets[] = {&out.splits.train, &out.splits.dev, &out.splits.test};
    for (int split = 0; split < 3; ++split) {
      for (std::size_t i = 0; i < sizes[split]; ++i) {
        Frame frame;
        for (int attempt = 0;; ++attempt) {
          frame = draw_frame(lang.id, schema, config, rng);
          auto [it, inserted] = frame_split.emplace(frame.key(), split);
          if (inserted || it->second == split) break;
          if (attempt > 1000) throw ConfigError("entity inventory too small to keep splits disjoint");
        }
        Example ex = render(frame, lang, lex, config, rng);
        char id[64];
        std::snprintf(id, sizeof id, "%s-%s-%06zu", lang.code.c_str(), split_names[split], i);
        ex.id = id;
        targets[split]->push_back(std::move(ex));
      }
    }
  }
  return out;
}

}  // namespace mere

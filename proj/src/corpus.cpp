// SPDX-License-Identifier: Apache-2.0
#include "mere/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "mere/errors.hpp"
#include "mere/rng.hpp"

namespace mere {

using nlohmann::json;

std::string to_string(WordOrder order) {
  switch (order) {
    case WordOrder::kSVO: return "SVO";
    case WordOrder::kSOV: return "SOV";
    case WordOrder::kVSO: return "VSO";
  }
  return "?";
}

WordOrder parse_word_order(std::string_view text) {
  if (text == "SVO") return WordOrder::kSVO;
  if (text == "SOV") return WordOrder::kSOV;
  if (text == "VSO") return WordOrder::kVSO;
  throw ConfigError("unknown word order '" + std::string(text) + "' (expected SVO, SOV or VSO)");
}

std::optional<std::size_t> RelationSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (relations[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t RelationSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw DataError("unknown relation '" + std::string(name) + "'; known relations: " + known_relations());
}

bool RelationSchema::is_allowed(std::size_t lang, std::size_t relation) const {
  return lang < allowed.size() && relation < allowed[lang].size() && allowed[lang][relation];
}

std::vector<double> RelationSchema::additive_mask(std::size_t lang) const {
  std::vector<double> mask(relations.size(), 0.0);
  for (std::size_t r = 0; r < relations.size(); ++r) {
    if (!is_allowed(lang, r)) mask[r] = -std::numeric_limits<double>::infinity();
  }
  return mask;
}

std::string RelationSchema::known_relations() const {
  std::string out;
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (i) out += ", ";
    out += relations[i];
  }
  return out;
}

std::optional<std::size_t> Registry::find_language(std::string_view code) const {
  for (const auto& l : languages) {
    if (l.code == code) return l.id;
  }
  return std::nullopt;
}

std::size_t Registry::language_index(std::string_view code) const {
  if (auto i = find_language(code)) return *i;
  throw DataError("unknown language '" + std::string(code) + "'");
}

std::vector<std::size_t> Registry::languages_by_resource() const {
  std::vector<std::size_t> order(languages.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return languages[a].resource_size > languages[b].resource_size;
  });
  return order;
}

void Registry::validate() const {
  if (languages.empty()) throw ConfigError("registry has no languages");
  std::set<std::string> codes;
  for (std::size_t i = 0; i < languages.size(); ++i) {
    const auto& l = languages[i];
    if (l.id != i) throw ConfigError("language ids must be dense 0..N-1");
    if (l.code.empty()) throw ConfigError("language code must be non-empty");
    if (!codes.insert(l.code).second) throw ConfigError("duplicate language code '" + l.code + "'");
  }
  if (schema.relations.empty() || schema.relations[0] != kNoRelation) {
    throw ConfigError("relation schema must list no_relation first");
  }
  if (schema.templates.size() != schema.relations.size()) {
    throw ConfigError("relation templates do not match relation list");
  }
  std::set<std::string> names(schema.relations.begin(), schema.relations.end());
  if (names.size() != schema.relations.size()) throw ConfigError("duplicate relation names");
  if (schema.allowed.size() != languages.size()) {
    throw ConfigError("allowed-relation matrix must have one row per language");
  }
  for (std::size_t n = 0; n < languages.size(); ++n) {
    const auto& row = schema.allowed[n];
    if (row.size() != schema.relations.size()) {
      throw ConfigError("allowed-relation row for '" + languages[n].code + "' has wrong length");
    }
    if (!row[0]) throw ConfigError("no_relation must be allowed in every language");
    if (std::count(row.begin(), row.end(), true) < 2) {
      throw ConfigError("language '" + languages[n].code + "' must allow at least one relation besides no_relation");
    }
  }
}

namespace {

void check_schema_version(const json& doc, const char* what) {
  if (!doc.contains("schema_version")) {
    throw ConfigError(std::string(what) + " is missing schema_version");
  }
  if (doc.at("schema_version").get<int>() != kSchemaVersion) {
    throw ConfigError(std::string(what) + " has unsupported schema_version");
  }
}

}  // namespace

Registry registry_from_json(const json& langs, const json& schema) {
  Registry reg;
  try {
    check_schema_version(langs, "language registry");
    check_schema_version(schema, "relation schema");
    if (!langs.contains("languages") || !langs.at("languages").is_array()) {
      throw ConfigError("language registry needs a 'languages' array");
    }
    for (const auto& item : langs.at("languages")) {
      LanguageSpec spec;
      spec.id = reg.languages.size();
      spec.code = item.at("code").get<std::string>();
      spec.word_order = parse_word_order(item.value("word_order", std::string("SVO")));
      spec.family = item.value("family", spec.code);
      spec.resource_size = item.value("resource_size", std::size_t{0});
      if (item.contains("vocab")) spec.vocab = item.at("vocab").get<std::vector<std::string>>();
      reg.languages.push_back(std::move(spec));
    }
    if (!schema.contains("relations") || !schema.at("relations").is_array()) {
      throw ConfigError("relation schema needs a 'relations' array");
    }
    for (const auto& item : schema.at("relations")) {
      reg.schema.relations.push_back(item.at("name").get<std::string>());
      if (item.contains("template")) {
        const auto& t = item.at("template");
        RelationTemplate tpl;
        tpl.subject_type = t.at("subject").get<std::string>();
        tpl.object_type = t.at("object").get<std::string>();
        tpl.cues = t.value("cues", std::size_t{2});
        if (tpl.cues == 0) throw ConfigError("relation '" + reg.schema.relations.back() + "' needs at least one cue");
        reg.schema.templates.emplace_back(tpl);
      } else {
        reg.schema.templates.emplace_back(std::nullopt);
      }
    }
    const std::size_t num_rel = reg.schema.relations.size();
    reg.schema.allowed.assign(reg.languages.size(), std::vector<bool>(num_rel, true));
    if (schema.contains("allowed")) {
      for (const auto& [code, value] : schema.at("allowed").items()) {
        auto lang = reg.find_language(code);
        if (!lang) throw ConfigError("allowed-relation entry for unknown language '" + code + "'");
        if (value.is_string() && value.get<std::string>() == "all") continue;
        std::vector<bool> row(num_rel, false);
        row[0] = true;
        for (const auto& name : value) {
          auto r = reg.schema.find(name.get<std::string>());
          if (!r) {
            throw ConfigError("allowed-relation entry names unknown relation '" + name.get<std::string>() +
                              "'; known relations: " + reg.schema.known_relations());
          }
          row[*r] = true;
        }
        reg.schema.allowed[*lang] = row;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed registry: ") + e.what());
  }
  reg.validate();
  return reg;
}

json registry_to_json(const Registry& registry) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["languages"] = json::array();
  for (const auto& l : registry.languages) {
    json item;
    item["code"] = l.code;
    item["word_order"] = to_string(l.word_order);
    item["family"] = l.family;
    item["resource_size"] = l.resource_size;
    if (!l.vocab.empty()) item["vocab"] = l.vocab;
    doc["languages"].push_back(item);
  }
  doc["relations"] = json::array();
  for (std::size_t r = 0; r < registry.schema.size(); ++r) {
    json item;
    item["name"] = registry.schema.relations[r];
    if (const auto& t = registry.schema.templates[r]) {
      item["template"] = {{"subject", t->subject_type}, {"object", t->object_type}, {"cues", t->cues}};
    }
    doc["relations"].push_back(item);
  }
  doc["allowed"] = json::object();
  for (const auto& l : registry.languages) {
    json names = json::array();
    for (std::size_t r = 1; r < registry.schema.size(); ++r) {
      if (registry.schema.is_allowed(l.id, r)) names.push_back(registry.schema.relations[r]);
    }
    doc["allowed"][l.code] = names;
  }
  return doc;
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

Registry load_registry(const std::string& langs_path, const std::string& schema_path) {
  const json langs = read_json_file(langs_path);
  const json schema = schema_path == langs_path ? langs : read_json_file(schema_path);
  return registry_from_json(langs, schema);
}

void save_registry(const std::string& path, const Registry& registry) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << registry_to_json(registry).dump(2) << '\n';
}

void validate_example(const Example& ex, const Registry& registry) {
  if (ex.id.empty()) throw DataError("example id must be non-empty");
  if (ex.lang >= registry.num_languages()) throw DataError("example " + ex.id + ": unknown language id");
  if (ex.tokens.empty()) throw DataError("example " + ex.id + ": no tokens");
  if (ex.relation >= registry.schema.size()) {
    throw DataError("example " + ex.id + ": unknown relation; known relations: " +
                    registry.schema.known_relations());
  }
  if (!registry.schema.is_allowed(ex.lang, ex.relation)) {
    throw DataError("example " + ex.id + ": relation '" + registry.schema.relations[ex.relation] +
                    "' is not allowed for language '" + registry.languages[ex.lang].code + "'");
  }
  const int n = static_cast<int>(ex.tokens.size());
  if (ex.relation == 0) {
    if (!ex.head.is_sentinel() || !ex.tail.is_sentinel()) {
      throw DataError("example " + ex.id + ": no_relation requires sentinel spans -1,-1");
    }
    return;
  }
  for (const auto* span : {&ex.head, &ex.tail}) {
    if (span->start < 0 || span->end < span->start || span->end >= n) {
      throw DataError("example " + ex.id + ": span " + std::to_string(span->start) + "," +
                      std::to_string(span->end) + " out of range for " + std::to_string(n) + " tokens");
    }
  }
}

namespace {

std::string format_span(const Span& s) { return std::to_string(s.start) + "," + std::to_string(s.end); }

Span parse_span(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw DataError("span '" + text + "' must be start,end");
  try {
    std::size_t used = 0;
    Span s;
    const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
    s.start = std::stoi(a, &used);
    if (used != a.size()) throw DataError("bad span start");
    s.end = std::stoi(b, &used);
    if (used != b.size()) throw DataError("bad span end");
    return s;
  } catch (const std::logic_error&) {
    throw DataError("span '" + text + "' is not a pair of integers");
  }
}

}  // namespace

std::string format_example(const Example& ex, const Registry& registry) {
  std::string tokens;
  for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
    if (i) tokens += ' ';
    tokens += ex.tokens[i];
  }
  return "id=" + ex.id + "\tlang=" + registry.languages.at(ex.lang).code + "\ttokens=" + tokens +
         "\thead=" + format_span(ex.head) + "\ttail=" + format_span(ex.tail) +
         "\trelation=" + registry.schema.relations.at(ex.relation);
}

void save_examples(const std::string& path, const std::vector<Example>& examples,
                   const Registry& registry) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "#schema_version=" << kSchemaVersion << '\n';
  for (const auto& ex : examples) out << format_example(ex, registry) << '\n';
}

std::vector<Example> parse_examples(std::istream& in, const Registry& registry) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "#schema_version=";
      if (line.rfind(key, 0) == 0) {
        if (line.substr(key.size()) != std::to_string(kSchemaVersion)) {
          throw LineError(line_no, "unsupported schema_version '" + line.substr(key.size()) + "'");
        }
        saw_header = true;
      }
      continue;
    }
    if (!saw_header) throw LineError(line_no, "missing #schema_version header before first record");
    std::map<std::string, std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, '\t')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw LineError(line_no, "field '" + field + "' is not key=value");
      auto key = field.substr(0, eq);
      if (!fields.emplace(key, field.substr(eq + 1)).second) {
        throw LineError(line_no, "duplicate field '" + key + "'");
      }
    }
    for (const char* key : {"id", "lang", "tokens", "head", "tail", "relation"}) {
      if (!fields.count(key)) throw LineError(line_no, std::string("missing field '") + key + "'");
    }
    if (fields.size() != 6) throw LineError(line_no, "unexpected extra fields");
    try {
      Example ex;
      ex.id = fields["id"];
      ex.lang = registry.language_index(fields["lang"]);
      std::istringstream toks(fields["tokens"]);
      std::string tok;
      while (toks >> tok) ex.tokens.push_back(tok);
      ex.head = parse_span(fields["head"]);
      ex.tail = parse_span(fields["tail"]);
      ex.relation = registry.schema.index_of(fields["relation"]);
      validate_example(ex, registry);
      out.push_back(std::move(ex));
    } catch (const LineError&) {
      throw;
    } catch (const std::exception& e) {
      throw LineError(line_no, e.what());
    }
  }
  return out;
}

std::vector<Example> load_examples(const std::string& path, const Registry& registry) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path);
  try {
    return parse_examples(in, registry);
  } catch (const LineError& e) {
    throw LineError(e.line(), path + ": " + std::string(e.what()).substr(std::string(e.what()).find(':') + 2));
  }
}

Stage1Sampler::Stage1Sampler(const std::vector<Example>& train, std::size_t concat_count)
    : concat_count_(concat_count) {
  if (concat_count == 0) throw ConfigError("concat count s must be at least 1");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train.size(); ++i) groups[train[i].lang].push_back(i);
  for (auto& [lang, idx] : groups) {
    languages_.push_back(lang);
    by_language_.push_back(std::move(idx));
  }
  if (concat_count > languages_.size()) {
    throw ConfigError("concat count s=" + std::to_string(concat_count) + " exceeds the " +
                      std::to_string(languages_.size()) + " language(s) present in the training split");
  }
}

ConcatGroup Stage1Sampler::draw(Rng& rng) const {
  ConcatGroup group;
  for (std::size_t slot : rng.sample_without_replacement(languages_.size(), concat_count_)) {
    const auto& pool = by_language_[slot];
    group.members.push_back(pool[rng.below(pool.size())]);
  }
  return group;
}

std::vector<ConcatGroup> Stage1Sampler::draw_batch(std::size_t groups, Rng& rng) const {
  std::vector<ConcatGroup> out;
  out.reserve(groups);
  for (std::size_t i = 0; i < groups; ++i) out.push_back(draw(rng));
  return out;
}

std::vector<ConcatGroup> sample_stage1_batch(const std::vector<Example>& train, std::size_t concat_count,
                                             std::size_t groups, Rng& rng) {
  return Stage1Sampler(train, concat_count).draw_batch(groups, rng);
}

}  // namespace mere

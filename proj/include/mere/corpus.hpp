// SPDX-License-Identifier: Apache-2.0
//
// Languages, relations, annotated examples, and the corpus file format.
//
// Corpus files are UTF-8 with a header line `#schema_version=1` followed by
// one record per line of tab-separated key=value fields:
//
//   id=en-train-000001  lang=en  tokens=w1 w2 w3  head=0,1  tail=2,2  relation=born-in
//
// Spans are inclusive token indices; no_relation records use head=-1,-1 and
// tail=-1,-1.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mere {

class Rng;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kNoRelation = "no_relation";

enum class WordOrder { kSVO, kSOV, kVSO };

std::string to_string(WordOrder order);
WordOrder parse_word_order(std::string_view text);

struct LanguageSpec {
  std::size_t id = 0;
  std::string code;
  WordOrder word_order = WordOrder::kSVO;
  std::string family;
  /// Language-specific surface tokens (cues and function words); filled by
  /// the generator.
  std::vector<std::string> vocab;
  std::size_t resource_size = 0;
};

/// Argument types and cue inventory used to render a relation.
struct RelationTemplate {
  std::string subject_type;
  std::string object_type;
  std::size_t cues = 2;
};

struct RelationSchema {
  /// relations[0] is no_relation.
  std::vector<std::string> relations;
  std::vector<std::optional<RelationTemplate>> templates;
  /// allowed[lang][relation]
  std::vector<std::vector<bool>> allowed;

  std::size_t size() const noexcept { return relations.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  bool is_allowed(std::size_t lang, std::size_t relation) const;
  /// 0 for allowed relations and -inf for the rest.
  std::vector<double> additive_mask(std::size_t lang) const;
  std::string known_relations() const;
};

struct Registry {
  std::vector<LanguageSpec> languages;
  RelationSchema schema;

  std::size_t num_languages() const noexcept { return languages.size(); }
  std::optional<std::size_t> find_language(std::string_view code) const;
  std::size_t language_index(std::string_view code) const;
  /// Language ids sorted by resource size, largest first (ties by id).
  std::vector<std::size_t> languages_by_resource() const;
  /// Checks the registry invariants; throws ConfigError.
  void validate() const;
};

struct Span {
  int start = -1;
  int end = -1;

  bool is_sentinel() const noexcept { return start == -1 && end == -1; }
  friend bool operator==(const Span&, const Span&) = default;
};

inline constexpr Span kSentinelSpan{-1, -1};

struct Example {
  std::string id;
  std::size_t lang = 0;
  std::vector<std::string> tokens;
  Span head = kSentinelSpan;
  Span tail = kSentinelSpan;
  std::size_t relation = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Splits {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

/// Throws DataError describing the first violated Example invariant.
void validate_example(const Example& example, const Registry& registry);

/// Reads languages from `langs` JSON and relations/allowed sets from
/// `schema` JSON. Both may be the same document.
Registry registry_from_json(const nlohmann::json& langs, const nlohmann::json& schema);
nlohmann::json registry_to_json(const Registry& registry);
Registry load_registry(const std::string& langs_path, const std::string& schema_path);
void save_registry(const std::string& path, const Registry& registry);

std::string format_example(const Example& example, const Registry& registry);
void save_examples(const std::string& path, const std::vector<Example>& examples,
                   const Registry& registry);
std::vector<Example> parse_examples(std::istream& in, const Registry& registry);
/// Throws LineError with the 1-based line number on malformed or invalid records.
std::vector<Example> load_examples(const std::string& path, const Registry& registry);

/// Indices into a training split; members have pairwise-distinct languages.
struct ConcatGroup {
  std::vector<std::size_t> members;
};

/// Draws groups of `concat_count` sentences: languages uniformly without
/// replacement, then a sentence uniformly within each chosen language.
class Stage1Sampler {
 public:
  Stage1Sampler(const std::vector<Example>& train, std::size_t concat_count);

  ConcatGroup draw(Rng& rng) const;
  std::vector<ConcatGroup> draw_batch(std::size_t groups, Rng& rng) const;
  const std::vector<std::size_t>& languages() const noexcept { return languages_; }

 private:
  std::size_t concat_count_;
  std::vector<std::size_t> languages_;
  std::vector<std::vector<std::size_t>> by_language_;
};

std::vector<ConcatGroup> sample_stage1_batch(const std::vector<Example>& train,
                                             std::size_t concat_count, std::size_t groups,
                                             Rng& rng);

}  // namespace mere

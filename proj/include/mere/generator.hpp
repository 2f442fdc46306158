// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multilingual corpus. Every sentence renders a language-neutral
// frame (subject entity, relation, object entity) through a language's
// lexicon and word order:
//
//   SVO  S cue O                        alternate: O passive cue agent S
//   SOV  S subj-marker O obj-marker cue  alternate: O obj-marker S subj-marker cue
//   VSO  cue S subj-marker O obj-marker  alternate: cue O obj-marker S subj-marker
//
// An optional filler word and an optional "preposition + entity" adjunct
// (before or after the clause) surround the clause.
//
// Entity names are built from typed pieces ("@person_12") shared by all
// languages. Cue, marker, filler and preposition words are per language;
// each word sense is shared across a family with probability `family_share`.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mere/corpus.hpp"

namespace mere {

struct GeneratorConfig {
  std::uint64_t seed = 1;
  double no_relation_fraction = 0.1;
  double family_share = 0.4;
  /// Probability of a filler word before the clause.
  double filler_prob = 0.3;
  /// Probability of a "preposition + entity" adjunct.
  double distractor_prob = 0.4;
  /// Probability of the alternate (passive or scrambled) clause order.
  double alternation_prob = 0.3;
  std::size_t entity_pool = 40;
  std::size_t fillers = 4;
  std::size_t prepositions = 2;
  std::size_t neutral_cues = 3;
  double train_ratio = 0.8;
  double dev_ratio = 0.1;
};

/// Six languages (en, it, de, ko, ar, uk) with a skewed resource profile and a
/// ten-relation schema.
Registry default_registry();
nlohmann::json default_languages_json();
nlohmann::json default_schema_json();

struct GeneratedCorpus {
  /// Input registry with each language's lexicon filled in.
  Registry registry;
  Splits splits;
};

/// Pure function of (registry, config). Throws ConfigError for a relation
/// without a surface template or a language with no sentences.
GeneratedCorpus generate_corpus(const Registry& registry, const GeneratorConfig& config);

/// Split sizes for `total` sentences: round(train_ratio * total),
/// round(dev_ratio * total), remainder.
std::array<std::size_t, 3> split_sizes(std::size_t total, double train_ratio, double dev_ratio);

/// Surface word for `sense` in `lang`.
std::string lexicon_word(const LanguageSpec& lang, const std::string& sense, double family_share,
                         std::uint64_t seed);

}  // namespace mere

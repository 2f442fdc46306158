// SPDX-License-Identifier: Apache-2.0
//
// Exact-match scoring of relational triples.
//
// Each sentence contributes one gold and one predicted item to every
// category, and no_relation items carry sentinel spans that match only each
// other. With one item per side, micro-F1 equals accuracy, and a correct
// triple implies a correct relation and a correct pair, so
// triple_f1 <= min(relation_f1, pair_f1) always.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mere/corpus.hpp"
#include "mere/model.hpp"

namespace mere {

struct TripleScore {
  bool relation_ok = false;
  bool pair_ok = false;
  bool triple_ok = false;
  bool head_ok = false;
  bool tail_ok = false;
};

/// Throws DataError when the prediction and gold ids differ.
TripleScore score_triple(const TriplePrediction& pred, const Example& gold);

/// 2PR / (P + R), 0 when P + R == 0.
double micro_f1(std::size_t tp, std::size_t fp, std::size_t fn);

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  void add(bool correct) {
    if (correct) {
      ++tp;
    } else {
      ++fp;
      ++fn;
    }
  }
  double f1() const { return micro_f1(tp, fp, fn); }
};

struct LanguageMetrics {
  std::string code;
  std::size_t support = 0;
  double relation_f1 = 0.0;
  double pair_f1 = 0.0;
  double triple_f1 = 0.0;
  double head_f1 = 0.0;
  double tail_f1 = 0.0;
};

struct RelationCell {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// Gold count; cells with zero support are reported as absent.
  std::size_t support = 0;
  double f1() const { return micro_f1(tp, fp, fn); }
};

struct MetricsReport {
  /// Languages with at least one evaluated sentence, in registry order.
  std::vector<LanguageMetrics> languages;
  /// Unweighted mean over `languages`.
  LanguageMetrics macro;
  std::vector<std::string> relation_names;
  /// grid[relation][i] for languages[i].
  std::vector<std::vector<RelationCell>> grid;
  nlohmann::json config = nlohmann::json::object();

  const LanguageMetrics* find(const std::string& code) const;
  /// Throws std::logic_error if triple_f1 exceeds relation_f1 or pair_f1.
  void check_dominance() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
  std::string grid_csv() const;
};

/// Scores aligned gold/prediction lists and checks dominance.
MetricsReport build_report(const Registry& registry, const std::vector<Example>& gold,
                           const std::vector<TriplePrediction>& predictions);

struct RouterHeatmap {
  /// Language codes, largest resource first.
  std::vector<std::string> languages;
  /// probs[t][i] = f_t(languages[i]).
  std::vector<std::vector<double>> probs;

  std::string to_csv() const;
};

/// Throws ConfigError for a model that has not been through stage 2.
RouterHeatmap export_router_heatmap(const Model& model, const Registry& registry);

/// Jaccard overlap |a n b| / |a u b|.
double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

/// One JSON object per line with gold and predicted triples.
std::string prediction_record(const TriplePrediction& pred, const Example& gold, const Registry& registry,
                              bool with_scores);

}  // namespace mere

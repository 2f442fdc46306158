// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <limits>
#include <random>

#include "doctest.h"
#include "mere/errors.hpp"
#include "mere/metrics.hpp"
#include "support.hpp"

using namespace mere;

namespace {

Example gold_example(const std::string& id, std::size_t lang, std::size_t rel, Span h, Span t) {
  Example e;
  e.id = id;
  e.lang = lang;
  e.tokens = {"a", "b", "c", "d", "e", "f"};
  e.relation = rel;
  e.head = h;
  e.tail = t;
  return e;
}

TriplePrediction predict(const Example& g, std::size_t rel, Span h, Span t) {
  TriplePrediction p;
  p.id = g.id;
  p.relation = rel;
  p.head = h;
  p.tail = t;
  return p;
}

/// Random gold/prediction lists where each component is right about half the time.
void random_pairs(const Registry& reg, std::mt19937_64& rng, std::size_t n, std::vector<Example>& gold,
                  std::vector<TriplePrediction>& pred) {
  std::uniform_int_distribution<std::size_t> lang(0, reg.num_languages() - 1), rel(0, reg.schema.size() - 1);
  std::uniform_int_distribution<int> pos(0, 2), coin(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Span h{pos(rng), pos(rng) + 2}, t{3 + pos(rng), 5};
    gold.push_back(gold_example("s" + std::to_string(i), lang(rng), rel(rng), h, t));
    const Example& g = gold.back();
    pred.push_back(predict(g, coin(rng) ? g.relation : rel(rng), coin(rng) ? h : Span{0, 0},
                           coin(rng) ? t : Span{5, 5}));
  }
}

}  // namespace

TEST_CASE("triple scoring is exact match") {
  const Example g = gold_example("x", 0, 2, {0, 1}, {3, 4});
  CHECK(score_triple(predict(g, 2, {0, 1}, {3, 4}), g).triple_ok);
  const TripleScore off_by_one = score_triple(predict(g, 2, {0, 1}, {3, 5}), g);
  CHECK(off_by_one.relation_ok);
  CHECK(off_by_one.head_ok);
  CHECK_FALSE(off_by_one.tail_ok);
  CHECK_FALSE(off_by_one.pair_ok);
  CHECK_FALSE(off_by_one.triple_ok);
  const TripleScore wrong_rel = score_triple(predict(g, 1, {0, 1}, {3, 4}), g);
  CHECK(wrong_rel.pair_ok);
  CHECK_FALSE(wrong_rel.triple_ok);
  // Swapped head and tail is not a match.
  CHECK_FALSE(score_triple(predict(g, 2, {3, 4}, {0, 1}), g).pair_ok);
  // no_relation sentinels match only each other.
  const Example none = gold_example("n", 0, 0, kSentinelSpan, kSentinelSpan);
  CHECK(score_triple(predict(none, 0, kSentinelSpan, kSentinelSpan), none).triple_ok);
  CHECK_FALSE(score_triple(predict(none, 0, {0, 0}, kSentinelSpan), none).pair_ok);
  CHECK_THROWS_AS(score_triple(predict(none, 0, kSentinelSpan, kSentinelSpan), g), DataError);
}

TEST_CASE("micro F1") {
  CHECK(micro_f1(8, 2, 2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(micro_f1(0, 5, 5) == 0.0);
  CHECK(micro_f1(0, 0, 0) == 0.0);
  CHECK(micro_f1(3, 0, 0) == 1.0);
  // P = 1/2, R = 1/4.
  CHECK(micro_f1(1, 1, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("report on hand-built predictions") {
  const Registry reg = test::small_registry({{"en", 10}, {"ko", 10}});
  const std::size_t born = reg.schema.index_of("born-in");
  std::vector<Example> gold;
  std::vector<TriplePrediction> pred;
  // en: 2 of 4 triples right, 3 of 4 relations, 2 of 4 pairs.
  gold.push_back(gold_example("e0", 0, born, {0, 0}, {3, 3}));
  pred.push_back(predict(gold.back(), born, {0, 0}, {3, 3}));
  gold.push_back(gold_example("e1", 0, born, {0, 0}, {3, 3}));
  pred.push_back(predict(gold.back(), born, {0, 1}, {3, 3}));
  gold.push_back(gold_example("e2", 0, 0, kSentinelSpan, kSentinelSpan));
  pred.push_back(predict(gold.back(), 0, kSentinelSpan, kSentinelSpan));
  gold.push_back(gold_example("e3", 0, born, {0, 0}, {3, 3}));
  pred.push_back(predict(gold.back(), 0, kSentinelSpan, kSentinelSpan));
  // ko: 1 of 1 right.
  gold.push_back(gold_example("k0", 1, born, {1, 1}, {4, 4}));
  pred.push_back(predict(gold.back(), born, {1, 1}, {4, 4}));

  const MetricsReport r = build_report(reg, gold, pred);
  REQUIRE(r.languages.size() == 2);
  const LanguageMetrics* en = r.find("en");
  REQUIRE(en != nullptr);
  CHECK(en->support == 4);
  CHECK(en->triple_f1 == doctest::Approx(0.5));
  CHECK(en->relation_f1 == doctest::Approx(0.75));
  CHECK(en->pair_f1 == doctest::Approx(0.5));
  CHECK(en->head_f1 == doctest::Approx(0.5));
  CHECK(en->tail_f1 == doctest::Approx(0.75));
  CHECK(r.find("ko")->triple_f1 == 1.0);
  CHECK(r.find("de") == nullptr);
  // Unweighted over languages, not sentences.
  CHECK(r.macro.triple_f1 == doctest::Approx(0.75));
  CHECK(r.macro.support == 5);

  // Relation grid: born-in in en has 3 gold, 2 found, and no_relation gains one false positive.
  const RelationCell& cell = r.grid[born][0];
  CHECK(cell.support == 3);
  CHECK(cell.tp == 2);
  CHECK(cell.fn == 1);
  CHECK(r.grid[0][0].fp == 1);
  CHECK(r.grid[0][0].tp == 1);
  const std::string csv = r.grid_csv();
  CHECK(csv.rfind("relation,en,ko\n", 0) == 0);
  CHECK(r.to_json()["macro"]["code"] == "AVG");
  CHECK(r.to_text().find("AVG") != std::string::npos);

  pred.pop_back();
  CHECK_THROWS_AS(build_report(reg, gold, pred), DataError);
}

TEST_CASE("report properties on random predictions") {
  const Registry reg = test::small_registry({{"en", 10}, {"it", 10}, {"ko", 10}});
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Example> gold;
    std::vector<TriplePrediction> pred;
    random_pairs(reg, rng, 60, gold, pred);
    const MetricsReport r = build_report(reg, gold, pred);
    CHECK_NOTHROW(r.check_dominance());

    for (std::size_t i = 0; i < r.languages.size(); ++i) {
      const LanguageMetrics& l = r.languages[i];
      CHECK(l.triple_f1 <= std::min(l.relation_f1, l.pair_f1) + 1e-12);
      // One item per side and sentence: relation F1 is accuracy.
      std::size_t right = 0, support = 0, lang = 0;
      while (reg.languages[lang].code != l.code) ++lang;
      for (std::size_t k = 0; k < gold.size(); ++k) {
        if (gold[k].lang != lang) continue;
        ++support;
        right += gold[k].relation == pred[k].relation;
      }
      CHECK(l.support == support);
      CHECK(l.relation_f1 == doctest::Approx(static_cast<double>(right) / static_cast<double>(support)));
      // Gold counts over the grid column add up to the language's support.
      std::size_t column = 0, tp = 0;
      for (const auto& row : r.grid) {
        column += row[i].support;
        tp += row[i].tp;
      }
      CHECK(column == support);
      CHECK(tp == right);
    }

    // Order of the sentences does not matter.
    std::vector<std::size_t> order(gold.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Example> g2;
    std::vector<TriplePrediction> p2;
    for (std::size_t k : order) {
      g2.push_back(gold[k]);
      p2.push_back(pred[k]);
    }
    CHECK(build_report(reg, g2, p2).to_json() == r.to_json());
  }
}

TEST_CASE("dominance check rejects an inconsistent report") {
  MetricsReport r;
  LanguageMetrics l;
  l.code = "en";
  l.relation_f1 = 0.5;
  l.pair_f1 = 0.9;
  l.triple_f1 = 0.6;
  r.languages.push_back(l);
  CHECK_THROWS_AS(r.check_dominance(), std::logic_error);
}

TEST_CASE("router heatmap") {
  const Dataset data = test::small_dataset({{"en", 40}, {"it", 30}, {"ko", 20}});
  Model model(test::tiny_config(data), 4);
  CHECK_THROWS_AS(export_router_heatmap(model, data.registry), ConfigError);
  model.set_stage(2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& p : model.params().parameters()) {
    if (p.name.rfind("router.", 0) != 0) continue;
    for (double& v : Tensor(p.value).mutable_data()) v += noise(rng);
  }
  const RouterHeatmap map = export_router_heatmap(model, data.registry);
  CHECK(map.languages == std::vector<std::string>{"en", "it", "ko"});
  REQUIRE(map.probs.size() == 3);
  for (std::size_t i = 0; i < map.languages.size(); ++i) {
    double sum = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
      REQUIRE(map.probs[t].size() == 3);
      CHECK(map.probs[t][i] > 0.0);
      sum += map.probs[t][i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  const std::string csv = map.to_csv();
  CHECK(csv.rfind("submodule,en,it,ko\ntheta_1,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("jaccard overlap") {
  CHECK(jaccard({0, 1}, {0, 1}) == 1.0);
  CHECK(jaccard({0, 1}, {2, 3}) == 0.0);
  CHECK(jaccard({0, 1, 2}, {1, 2, 3}) == doctest::Approx(0.5));
  CHECK(jaccard({}, {}) == 1.0);
}

TEST_CASE("prediction records") {
  const Registry reg = test::small_registry({{"en", 10}});
  const std::size_t born = reg.schema.index_of("born-in");
  const Example g = gold_example("en-7", 0, born, {0, 1}, {3, 3});
  TriplePrediction p = predict(g, 0, kSentinelSpan, kSentinelSpan);
  p.relation_logits = {0.5, -1.0};
  p.scores[0] = {1.0, -std::numeric_limits<double>::infinity()};
  const nlohmann::json rec = nlohmann::json::parse(prediction_record(p, g, reg, false));
  CHECK(rec["id"] == "en-7");
  CHECK(rec["lang"] == "en");
  CHECK(rec["gold"]["relation"] == "born-in");
  CHECK(rec["gold"]["head"] == nlohmann::json{0, 1});
  CHECK(rec["pred"]["relation"] == "no_relation");
  CHECK(rec["pred"]["tail"] == nlohmann::json{-1, -1});
  CHECK_FALSE(rec.contains("relation_logits"));
  const nlohmann::json full = nlohmann::json::parse(prediction_record(p, g, reg, true));
  CHECK(full["relation_logits"].size() == 2);
  CHECK(full["position_scores"].size() == 4);
}

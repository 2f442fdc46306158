// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "doctest.h"
#include "mere/ablation.hpp"
#include "mere/errors.hpp"
#include "support.hpp"

using namespace mere;

namespace {

RunConfig quick_run() {
  RunConfig run = test::tiny_run();
  run.training.stage1_epochs = 1;
  run.training.stage2_max_epochs = 1;
  return run;
}

std::size_t data_rows(const std::string& csv) { return std::count(csv.begin(), csv.end(), '\n') - 1; }

}  // namespace

TEST_CASE("ablation tables") {
  // en and de share a family and SVO order; ko and ar are alone in both.
  const Dataset data = test::small_dataset({{"en", 40}, {"de", 30}, {"ko", 30}, {"ar", 20}});
  const RunConfig run = quick_run();

  SUBCASE("concat count, with threads matching a single worker") {
    const AblationTable one = run_ablation("concat_count", run, data, 1);
    CHECK(one.rows.size() == 4);
    CHECK(one.columns == std::vector<std::string>{"en", "de", "ko", "ar", "AVG"});
    CHECK(one.rows[0].variant == "s=1");
    CHECK(one.rows[3].variant == "s=4");
    CHECK(data_rows(one.to_csv()) == 4);
    CHECK(run_ablation("concat_count", run, data, 3).to_csv() == one.to_csv());
  }
  SUBCASE("top-k sweep") {
    const AblationTable t = run_ablation("topk_sweep", run, data);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.find("k=3") != nullptr);
    for (const auto& row : t.rows) {
      for (const auto& v : row.values) CHECK((v && *v >= 0.0 && *v <= 1.0));
    }
  }
  SUBCASE("layer numbers") {
    const AblationTable t = run_ablation("layer_numbers", run, data);
    CHECK(t.rows.size() == 10);
    CHECK(t.find("layers_1-1") != nullptr);
    CHECK(t.find("layers_2-4") != nullptr);
  }
  SUBCASE("language groups") {
    const AblationTable t = run_ablation("language_groups", run, data);
    REQUIRE(t.find("all") != nullptr);
    CHECK(t.rows.size() == 3);
    CHECK(t.find("order=SOV") == nullptr);
    const auto* euro = t.find("family=euro");
    REQUIRE(euro != nullptr);
    REQUIRE(t.find("order=SVO") != nullptr);
    // Columns outside the group stay empty.
    CHECK(euro->values[1].has_value());
    CHECK_FALSE(euro->values[2].has_value());
  }
  SUBCASE("mono against multi") {
    const AblationTable t = run_ablation("mono_vs_multi", run, data);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].variant == "multi");
    CHECK(t.rows[1].variant == "mono");
    for (const auto& v : t.rows[1].values) CHECK(v.has_value());
  }
  SUBCASE("identity routing") {
    const AblationTable t = run_ablation("no_selection_T_experts", run, data);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1].variant == "identity_T4");
  }
  CHECK_THROWS_AS(run_ablation("bogus", run, data), ConfigError);
}

TEST_CASE("cached base features reproduce the uncached evaluation") {
  const Dataset data = test::small_dataset({{"en", 40}, {"ko", 30}});
  RunConfig run = quick_run();
  auto stage1 = run_stage1(run, data);
  auto stage2 = run_stage2(*stage1, run, data);
  std::vector<BaseFeatures> cache;
  for (const auto& s : data.dev) cache.push_back(stage2->base_features(s));
  const InferenceMode mode = default_inference(*stage2, 3);
  const Evaluation plain = evaluate(*stage2, data.registry, data.splits.dev, data.dev, mode);
  const Evaluation cached = evaluate(*stage2, data.registry, data.splits.dev, data.dev, mode, &cache);
  CHECK(plain.report.to_json() == cached.report.to_json());
  for (std::size_t i = 0; i < plain.predictions.size(); ++i) {
    CHECK(plain.predictions[i].relation_logits == cached.predictions[i].relation_logits);
    CHECK(plain.predictions[i].scores == cached.predictions[i].scores);
  }
  cache.pop_back();
  CHECK_THROWS_AS(evaluate(*stage2, data.registry, data.splits.dev, data.dev, mode, &cache), DataError);
}

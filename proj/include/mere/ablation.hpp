// SPDX-License-Identifier: Apache-2.0
//
// Ablation drivers. Each returns a table of test triple F1 with one row per
// variant and one column per language (plus the macro average). All variants
// share the base seed.
//
//   concat_count            s in {1, 2, 3, 4} (capped at the language count)
//   topk_sweep              one model, eval k = 1..T
//   layer_numbers           sub-module layer groups (a, b), 1 <= a <= b <= 4
//   mono_vs_multi           one stage-1 model per language vs one shared model
//   language_groups         training on all / same-family / same-word-order sets
//   no_selection_T_experts  learned top-k routing vs one sub-module per language
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mere/pipeline.hpp"

namespace mere {

struct AblationTable {
  std::string name;
  /// Language codes then "AVG".
  std::vector<std::string> columns;
  struct Row {
    std::string variant;
    std::vector<std::optional<double>> values;
  };
  std::vector<Row> rows;

  const Row* find(const std::string& variant) const;
  std::string to_csv() const;
};

const std::vector<std::string>& ablation_names();

/// Runs up to `jobs` variants concurrently on threads.
AblationTable run_ablation(const std::string& name, const RunConfig& base, const Dataset& data, std::size_t jobs = 1,
                           const std::function<void(const std::string&)>& log = {});

/// Stage-1-only models with s = 1: one shared across languages and one per
/// language. Columns follow the registry.
AblationTable mono_vs_multi(const RunConfig& base, const Dataset& data, std::size_t jobs = 1,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace mere

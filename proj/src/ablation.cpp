// SPDX-License-Identifier: Apache-2.0
#include "mere/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mere/errors.hpp"

namespace mere {

const AblationTable::Row* AblationTable::find(const std::string& variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return &r;
  }
  return nullptr;
}

std::string AblationTable::to_csv() const {
  std::ostringstream out;
  out << "variant";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.variant;
    for (const auto& v : r.values) {
      out << ',';
      if (v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", *v);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"concat_count",  "topk_sweep",      "layer_numbers",
                                              "mono_vs_multi", "language_groups", "no_selection_T_experts"};
  return names;
}

namespace {

using Log = std::function<void(const std::string&)>;
using Task = std::function<void()>;

void run_tasks(std::vector<Task>& tasks, std::size_t jobs) {
  jobs = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::exception_ptr> errors(tasks.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= tasks.size()) return;
        i = next++;
      }
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::string> columns_for(const Registry& registry) {
  std::vector<std::string> cols;
  for (const auto& l : registry.languages) cols.push_back(l.code);
  cols.push_back("AVG");
  return cols;
}

AblationTable::Row row_from(const std::string& variant, const MetricsReport& report, const Registry& registry) {
  AblationTable::Row row;
  row.variant = variant;
  for (const auto& l : registry.languages) {
    const auto* m = report.find(l.code);
    row.values.push_back(m ? std::optional<double>(m->triple_f1) : std::nullopt);
  }
  row.values.push_back(report.languages.empty() ? std::nullopt : std::optional<double>(report.macro.triple_f1));
  return row;
}

MetricsReport test_report(const Model& model, const Dataset& data, InferenceMode mode) {
  return evaluate(model, data.registry, data.splits.test, data.test, mode).report;
}

TrainHooks hooks_for(const Log& log, const std::string& variant) {
  TrainHooks hooks;
  if (log) hooks.log = [log, variant](const std::string& line) { log("[" + variant + "] " + line); };
  return hooks;
}

std::string layers_name(std::size_t a, std::size_t b) { return "layers_" + std::to_string(a) + "-" + std::to_string(b); }

AblationTable concat_count(const RunConfig& base, const Dataset& data, std::size_t jobs, const Log& log) {
  AblationTable table{"concat_count", columns_for(data.registry), {}};
  std::set<std::size_t> langs;
  for (const auto& ex : data.splits.train) langs.insert(ex.lang);
  const std::size_t max_s = std::min<std::size_t>(4, langs.size());
  table.rows.resize(max_s);
  std::vector<Task> tasks;
  for (std::size_t s = 1; s <= max_s; ++s) {
    tasks.push_back([&, s]() {
      RunConfig cfg = base;
      cfg.training.concat_count = s;
      const std::string name = "s=" + std::to_string(s);
      auto stage1 = run_stage1(cfg, data, hooks_for(log, name));
      auto stage2 = run_stage2(*stage1, cfg, data, hooks_for(log, name));
      table.rows[s - 1] = row_from(name, test_report(*stage2, data, default_inference(*stage2, cfg.training.eval_k)),
                                   data.registry);
    });
  }
  run_tasks(tasks, jobs);
  return table;
}

AblationTable topk_sweep(const RunConfig& base, const Dataset& data, const Log& log) {
  AblationTable table{"topk_sweep", columns_for(data.registry), {}};
  auto stage1 = run_stage1(base, data, hooks_for(log, "topk"));
  auto stage2 = run_stage2(*stage1, base, data, hooks_for(log, "topk"));
  for (std::size_t k = 1; k <= stage2->switcher().experts(); ++k) {
    const InferenceMode mode{true, SwitchMode::eval(k)};
    table.rows.push_back(row_from("k=" + std::to_string(k), test_report(*stage2, data, mode), data.registry));
  }
  return table;
}

AblationTable layer_numbers(const RunConfig& base, const Dataset& data, std::size_t jobs, const Log& log) {
  AblationTable table{"layer_numbers", columns_for(data.registry), {}};
  auto stage1 = run_stage1(base, data, hooks_for(log, "layers"));
  const SwitcherConfig defaults = stage1->config().switcher;
  const std::size_t t = defaults.experts();
  std::vector<std::pair<std::size_t, std::size_t>> variants;
  for (std::size_t a = 1; a <= 4; ++a) {
    for (std::size_t b = a; b <= 4; ++b) variants.emplace_back(a, b);
  }
  table.rows.resize(variants.size());
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    tasks.push_back([&, i]() {
      const auto [a, b] = variants[i];
      SwitcherConfig sc = defaults;
      sc.layers.assign(t, a);
      for (std::size_t j = t / 2; j < t; ++j) sc.layers[j] = b;
      auto model = run_stage2_with_switcher(*stage1, sc, base, data, hooks_for(log, layers_name(a, b)));
      table.rows[i] = row_from(layers_name(a, b), test_report(*model, data, default_inference(*model, base.training.eval_k)),
                               data.registry);
    });
  }
  run_tasks(tasks, jobs);
  return table;
}

AblationTable language_groups(const RunConfig& base, const Dataset& data, std::size_t jobs, const Log& log) {
  AblationTable table{"language_groups", columns_for(data.registry), {}};
  std::vector<std::pair<std::string, std::set<std::size_t>>> groups;
  std::set<std::size_t> all;
  std::map<std::string, std::set<std::size_t>> families, orders;
  for (const auto& l : data.registry.languages) {
    all.insert(l.id);
    families[l.family].insert(l.id);
    orders[to_string(l.word_order)].insert(l.id);
  }
  groups.emplace_back("all", all);
  for (const auto& [name, members] : families) {
    if (members.size() >= 2 && members != all) groups.emplace_back("family=" + name, members);
  }
  for (const auto& [name, members] : orders) {
    if (members.size() >= 2 && members != all) groups.emplace_back("order=" + name, members);
  }
  table.rows.resize(groups.size());
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    tasks.push_back([&, i]() {
      const auto& [name, members] = groups[i];
      const Dataset subset = data.restrict_to(members);
      RunConfig cfg = base;
      cfg.training.concat_count = std::min(cfg.training.concat_count, members.size());
      auto stage1 = run_stage1(cfg, subset, hooks_for(log, name));
      auto stage2 = run_stage2(*stage1, cfg, subset, hooks_for(log, name));
      table.rows[i] = row_from(name, test_report(*stage2, subset, default_inference(*stage2, cfg.training.eval_k)),
                               data.registry);
    });
  }
  run_tasks(tasks, jobs);
  return table;
}

AblationTable no_selection(const RunConfig& base, const Dataset& data, std::size_t jobs, const Log& log) {
  AblationTable table{"no_selection_T_experts", columns_for(data.registry), {}};
  auto stage1 = run_stage1(base, data, hooks_for(log, "selection"));
  const SwitcherConfig learned = stage1->config().switcher;
  SwitcherConfig identity = learned;
  identity.routing = Routing::kIdentity;
  identity.layers.assign(data.registry.num_languages(), 1);
  const std::string learned_name =
      "top" + std::to_string(base.training.eval_k) + "_of_T" + std::to_string(learned.experts());
  const std::string identity_name = "identity_T" + std::to_string(identity.experts());
  table.rows.resize(2);
  std::vector<Task> tasks;
  tasks.push_back([&]() {
    auto model = run_stage2_with_switcher(*stage1, learned, base, data, hooks_for(log, learned_name));
    table.rows[0] = row_from(learned_name, test_report(*model, data, default_inference(*model, base.training.eval_k)),
                             data.registry);
  });
  tasks.push_back([&]() {
    RunConfig cfg = base;
    cfg.training.eval_k = 1;
    auto model = run_stage2_with_switcher(*stage1, identity, cfg, data, hooks_for(log, identity_name));
    table.rows[1] = row_from(identity_name, test_report(*model, data, default_inference(*model, 1)), data.registry);
  });
  run_tasks(tasks, jobs);
  return table;
}

}  // namespace

AblationTable mono_vs_multi(const RunConfig& base, const Dataset& data, std::size_t jobs, const Log& log) {
  AblationTable table{"mono_vs_multi", columns_for(data.registry), {}};
  RunConfig cfg = base;
  cfg.training.concat_count = 1;
  const InferenceMode stage1_mode{false, SwitchMode::eval(cfg.training.eval_k)};

  std::vector<std::size_t> langs;
  for (const auto& l : data.registry.languages) langs.push_back(l.id);
  std::vector<std::optional<double>> mono(langs.size());
  AblationTable::Row multi_row;
  std::vector<Task> tasks;
  tasks.push_back([&]() {
    auto model = run_stage1(cfg, data, hooks_for(log, "multi"));
    multi_row = row_from("multi", test_report(*model, data, stage1_mode), data.registry);
  });
  for (std::size_t i = 0; i < langs.size(); ++i) {
    tasks.push_back([&, i]() {
      const Dataset subset = data.restrict_to({langs[i]});
      if (subset.train.empty() || subset.test.empty()) return;
      const std::string name = "mono:" + data.registry.languages[langs[i]].code;
      auto model = run_stage1(cfg, subset, hooks_for(log, name));
      const MetricsReport report = test_report(*model, subset, stage1_mode);
      mono[i] = report.languages.at(0).triple_f1;
    });
  }
  run_tasks(tasks, jobs);
  AblationTable::Row mono_row;
  mono_row.variant = "mono";
  mono_row.values = mono;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : mono) {
    if (v) {
      sum += *v;
      ++count;
    }
  }
  mono_row.values.push_back(count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt);
  table.rows.push_back(multi_row);
  table.rows.push_back(mono_row);
  return table;
}

AblationTable run_ablation(const std::string& name, const RunConfig& base, const Dataset& data, std::size_t jobs,
                           const Log& log) {
  if (name == "concat_count") return concat_count(base, data, jobs, log);
  if (name == "topk_sweep") return topk_sweep(base, data, log);
  if (name == "layer_numbers") return layer_numbers(base, data, jobs, log);
  if (name == "mono_vs_multi") return mono_vs_multi(base, data, jobs, log);
  if (name == "language_groups") return language_groups(base, data, jobs, log);
  if (name == "no_selection_T_experts") return no_selection(base, data, jobs, log);
  std::string known;
  for (const auto& n : ablation_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown ablation '" + name + "' (known: " + known + ")");
}

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
#include "mere/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mere/errors.hpp"

namespace mere {

using nlohmann::json;

TripleScore score_triple(const TriplePrediction& pred, const Example& gold) {
  if (pred.id != gold.id) throw DataError("prediction '" + pred.id + "' scored against gold '" + gold.id + "'");
  TripleScore s;
  s.relation_ok = pred.relation == gold.relation;
  s.head_ok = pred.head == gold.head;
  s.tail_ok = pred.tail == gold.tail;
  s.pair_ok = s.head_ok && s.tail_ok;
  s.triple_ok = s.relation_ok && s.pair_ok;
  return s;
}

double micro_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

const LanguageMetrics* MetricsReport::find(const std::string& code) const {
  for (const auto& l : languages) {
    if (l.code == code) return &l;
  }
  return nullptr;
}

void MetricsReport::check_dominance() const {
  auto check = [](const LanguageMetrics& l) {
    const double bound = std::min(l.relation_f1, l.pair_f1);
    if (l.triple_f1 > bound + 1e-12) {
      throw std::logic_error("metric dominance violated for " + l.code + ": triple " + std::to_string(l.triple_f1) +
                             " > min(relation, pair) " + std::to_string(bound));
    }
  };
  for (const auto& l : languages) check(l);
  check(macro);
}

namespace {

json language_json(const LanguageMetrics& l) {
  return {{"code", l.code},         {"support", l.support}, {"relation_f1", l.relation_f1},
          {"pair_f1", l.pair_f1},   {"triple_f1", l.triple_f1}, {"head_f1", l.head_f1},
          {"tail_f1", l.tail_f1}};
}

std::string fmt(double v, int precision = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

json MetricsReport::to_json() const {
  json doc;
  doc["languages"] = json::array();
  for (const auto& l : languages) doc["languages"].push_back(language_json(l));
  doc["macro"] = language_json(macro);
  json grid_doc = json::array();
  for (std::size_t r = 0; r < relation_names.size(); ++r) {
    for (std::size_t i = 0; i < languages.size(); ++i) {
      const auto& c = grid[r][i];
      json cell = {{"relation", relation_names[r]}, {"lang", languages[i].code}, {"tp", c.tp},
                   {"fp", c.fp}, {"fn", c.fn}, {"support", c.support}};
      cell["f1"] = c.support > 0 ? json(c.f1()) : json(nullptr);
      grid_doc.push_back(cell);
    }
  }
  doc["relation_grid"] = grid_doc;
  doc["config"] = config;
  return doc;
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %8s %9s %9s %9s %9s %9s\n", "lang", "support", "relation", "pair",
                "triple", "head", "tail");
  out << line;
  auto row = [&](const LanguageMetrics& l) {
    std::snprintf(line, sizeof line, "%-6s %8zu %9.4f %9.4f %9.4f %9.4f %9.4f\n", l.code.c_str(), l.support,
                  l.relation_f1, l.pair_f1, l.triple_f1, l.head_f1, l.tail_f1);
    out << line;
  };
  for (const auto& l : languages) row(l);
  row(macro);
  return out.str();
}

std::string MetricsReport::grid_csv() const {
  std::ostringstream out;
  out << "relation";
  for (const auto& l : languages) out << ',' << l.code;
  out << '\n';
  for (std::size_t r = 0; r < relation_names.size(); ++r) {
    out << relation_names[r];
    for (std::size_t i = 0; i < languages.size(); ++i) {
      out << ',';
      if (grid[r][i].support > 0) out << fmt(grid[r][i].f1());
    }
    out << '\n';
  }
  return out.str();
}

MetricsReport build_report(const Registry& registry, const std::vector<Example>& gold,
                           const std::vector<TriplePrediction>& predictions) {
  if (gold.size() != predictions.size()) {
    throw DataError(std::to_string(predictions.size()) + " predictions for " + std::to_string(gold.size()) +
                    " gold examples");
  }
  const std::size_t n_lang = registry.num_languages();
  const std::size_t n_rel = registry.schema.size();
  struct LangCounts {
    std::size_t support = 0;
    Counts relation, pair, triple, head, tail;
  };
  std::vector<LangCounts> counts(n_lang);
  std::vector<std::vector<RelationCell>> cells(n_rel, std::vector<RelationCell>(n_lang));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Example& g = gold[i];
    const TriplePrediction& p = predictions[i];
    if (g.lang >= n_lang) throw DataError("example " + g.id + ": unknown language");
    if (p.relation >= n_rel) throw DataError("prediction " + p.id + ": unknown relation");
    const TripleScore s = score_triple(p, g);
    auto& c = counts[g.lang];
    ++c.support;
    c.relation.add(s.relation_ok);
    c.pair.add(s.pair_ok);
    c.triple.add(s.triple_ok);
    c.head.add(s.head_ok);
    c.tail.add(s.tail_ok);
    auto& gold_cell = cells[g.relation][g.lang];
    ++gold_cell.support;
    if (s.relation_ok) {
      ++gold_cell.tp;
    } else {
      ++gold_cell.fn;
      ++cells[p.relation][g.lang].fp;
    }
  }

  MetricsReport report;
  report.relation_names = registry.schema.relations;
  report.grid.assign(n_rel, {});
  report.macro.code = "AVG";
  for (std::size_t l = 0; l < n_lang; ++l) {
    const auto& c = counts[l];
    if (c.support == 0) continue;
    LanguageMetrics m;
    m.code = registry.languages[l].code;
    m.support = c.support;
    m.relation_f1 = c.relation.f1();
    m.pair_f1 = c.pair.f1();
    m.triple_f1 = c.triple.f1();
    m.head_f1 = c.head.f1();
    m.tail_f1 = c.tail.f1();
    report.languages.push_back(m);
    for (std::size_t r = 0; r < n_rel; ++r) report.grid[r].push_back(cells[r][l]);
  }
  if (!report.languages.empty()) {
    const double n = static_cast<double>(report.languages.size());
    for (const auto& m : report.languages) {
      report.macro.support += m.support;
      report.macro.relation_f1 += m.relation_f1 / n;
      report.macro.pair_f1 += m.pair_f1 / n;
      report.macro.triple_f1 += m.triple_f1 / n;
      report.macro.head_f1 += m.head_f1 / n;
      report.macro.tail_f1 += m.tail_f1 / n;
    }
  }
  report.check_dominance();
  return report;
}

std::string RouterHeatmap::to_csv() const {
  std::ostringstream out;
  out << "submodule";
  for (const auto& code : languages) out << ',' << code;
  out << '\n';
  for (std::size_t t = 0; t < probs.size(); ++t) {
    out << "theta_" << (t + 1);
    for (double p : probs[t]) out << ',' << fmt(p, 6);
    out << '\n';
  }
  return out.str();
}

RouterHeatmap export_router_heatmap(const Model& model, const Registry& registry) {
  if (model.stage() < 2) throw ConfigError("router heatmap needs a stage-2 checkpoint; the router is untrained");
  if (registry.num_languages() != model.switcher().num_languages()) {
    throw ConfigError("registry and checkpoint disagree on the number of languages");
  }
  RouterHeatmap map;
  const std::size_t t_count = model.switcher().experts();
  map.probs.assign(t_count, {});
  for (std::size_t lang : registry.languages_by_resource()) {
    map.languages.push_back(registry.languages[lang].code);
    const Tensor probs = model.switcher().route(lang);
    for (std::size_t t = 0; t < t_count; ++t) map.probs[t].push_back(probs.value(t));
  }
  return map;
}

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (std::size_t x : sa) inter += sb.count(x);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string prediction_record(const TriplePrediction& pred, const Example& gold, const Registry& registry,
                              bool with_scores) {
  auto triple = [&](std::size_t rel, const Span& h, const Span& t) {
    return json{{"relation", registry.schema.relations.at(rel)},
                {"head", {h.start, h.end}},
                {"tail", {t.start, t.end}}};
  };
  json rec = {{"id", gold.id},
              {"lang", registry.languages.at(gold.lang).code},
              {"gold", triple(gold.relation, gold.head, gold.tail)},
              {"pred", triple(pred.relation, pred.head, pred.tail)}};
  if (with_scores) {
    rec["relation_logits"] = pred.relation_logits;
    json scores = json::object();
    for (std::size_t y = 0; y < 4; ++y) {
      json v = json::array();
      for (double s : pred.scores[y]) v.push_back(std::isinf(s) ? json(nullptr) : json(s));
      scores[kEntitySlotNames[y]] = v;
    }
    rec["position_scores"] = scores;
  }
  return rec.dump();
}

}  // namespace mere

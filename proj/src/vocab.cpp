// SPDX-License-Identifier: Apache-2.0
#include "mere/vocab.hpp"

#include <fstream>
#include <limits>
#include <set>

#include "mere/errors.hpp"

namespace mere {

Vocab::Vocab(std::size_t num_languages, const std::vector<std::string>& content)
    : num_languages_(num_languages) {
  add("[PAD]");
  add("[CLS]");
  add("[SEP]");
  for (std::size_t n = 0; n < num_languages; ++n) add("[LANG_" + std::to_string(n) + "]");
  for (const auto& t : content) {
    if (!ids_.count(t)) add(t);
  }
}

void Vocab::add(const std::string& token) {
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocab Vocab::load(const std::string& path, std::size_t num_languages) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  const Vocab reserved(num_languages, {});
  if (lines.size() < reserved.size()) throw DataError(path + ": vocabulary shorter than its reserved tokens");
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (lines[i] != reserved.token(i)) {
      throw LineError(i + 1, path + ": expected reserved token " + reserved.token(i));
    }
  }
  Vocab v = reserved;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (lines[i].empty() || v.contains(lines[i])) throw LineError(i + 1, path + ": empty or duplicate token");
    v.add(lines[i]);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

std::size_t Vocab::lang_id(std::size_t lang) const {
  if (lang >= num_languages_) throw DataError("language id " + std::to_string(lang) + " has no [LANG] token");
  return 3 + lang;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

std::size_t Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) throw DataError("token '" + std::string(token) + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " out of vocabulary range");
  return tokens_[id];
}

Vocab build_vocab(const Registry& registry, const Splits& splits) {
  std::set<std::string> words;
  for (const auto& l : registry.languages) words.insert(l.vocab.begin(), l.vocab.end());
  for (const auto* part : {&splits.train, &splits.dev, &splits.test}) {
    for (const auto& ex : *part) words.insert(ex.tokens.begin(), ex.tokens.end());
  }
  return Vocab(registry.num_languages(), std::vector<std::string>(words.begin(), words.end()));
}

std::vector<double> TokenizedSentence::position_mask() const {
  std::vector<double> mask(input_ids.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = content_begin; i < content_end; ++i) mask[i] = 0.0;
  return mask;
}

TokenizedSentence tokenize(const Example& ex, const Vocab& vocab, std::size_t max_len, bool lang_token) {
  if (ex.tokens.empty()) throw DataError("example " + ex.id + ": empty sentence");
  const std::size_t offset = lang_token ? 2 : 1;
  const std::size_t length = ex.tokens.size() + offset + 1;
  if (length > max_len) {
    throw DataError("example " + ex.id + ": " + std::to_string(length) + " positions exceed max_len " +
                    std::to_string(max_len));
  }
  TokenizedSentence ts;
  ts.id = ex.id;
  ts.lang = ex.lang;
  ts.relation = ex.relation;
  ts.input_ids.push_back(kClsId);
  if (lang_token) ts.input_ids.push_back(vocab.lang_id(ex.lang));
  for (const auto& t : ex.tokens) ts.input_ids.push_back(vocab.id(t));
  ts.input_ids.push_back(kSepId);
  ts.attention_mask.assign(ts.input_ids.size(), true);
  ts.content_begin = offset;
  ts.content_end = offset + ex.tokens.size();
  auto shift = [&](Span s) {
    if (s.is_sentinel()) return s;
    return Span{s.start + static_cast<int>(offset), s.end + static_cast<int>(offset)};
  };
  ts.head = shift(ex.head);
  ts.tail = shift(ex.tail);
  return ts;
}

std::vector<TokenizedSentence> tokenize_all(const std::vector<Example>& examples, const Vocab& vocab,
                                            std::size_t max_len, bool lang_token) {
  std::vector<TokenizedSentence> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(tokenize(ex, vocab, max_len, lang_token));
  return out;
}

TokenizedSentence pad_to(TokenizedSentence s, std::size_t length) {
  if (length < s.input_ids.size()) throw DimensionError("pad_to: target shorter than sentence");
  s.input_ids.resize(length, kPadId);
  s.attention_mask.resize(length, false);
  return s;
}

}  // namespace mere

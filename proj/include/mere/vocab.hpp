// SPDX-License-Identifier: Apache-2.0
//
// Closed vocabulary and sentence tokenization.
//
// Vocabulary files hold one token per line; the line number is the id.
// [PAD]=0, [CLS]=1, [SEP]=2 and [LANG_0..N-1] occupy the first N+3 lines.
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mere/corpus.hpp"

namespace mere {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kClsId = 1;
inline constexpr std::size_t kSepId = 2;

class Vocab {
 public:
  Vocab() = default;
  /// Reserved tokens followed by `content` (duplicates dropped, order kept).
  Vocab(std::size_t num_languages, const std::vector<std::string>& content);

  static Vocab load(const std::string& path, std::size_t num_languages);
  void save(const std::string& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t num_languages() const noexcept { return num_languages_; }
  std::size_t lang_id(std::size_t lang) const;
  bool contains(std::string_view token) const;
  /// Throws DataError for out-of-vocabulary tokens.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.num_languages_ == b.num_languages_ && a.tokens_ == b.tokens_;
  }

 private:
  void add(const std::string& token);

  std::size_t num_languages_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Sorted union of the registry lexicons and every token in `splits`.
Vocab build_vocab(const Registry& registry, const Splits& splits);

struct TokenizedSentence {
  std::string id;
  std::vector<std::size_t> input_ids;
  /// False exactly on [PAD] positions.
  std::vector<bool> attention_mask;
  std::size_t lang = 0;
  /// Gold spans in sequence positions; sentinel for no_relation.
  Span head = kSentinelSpan;
  Span tail = kSentinelSpan;
  std::size_t relation = 0;
  /// Content tokens occupy [content_begin, content_end).
  std::size_t content_begin = 0;
  std::size_t content_end = 0;

  std::size_t length() const noexcept { return input_ids.size(); }
  /// 0 on content positions, -inf on special and padding positions.
  std::vector<double> position_mask() const;
};

/// [CLS] [LANG_n]? content [SEP]. Throws DataError on empty content, unknown
/// tokens, or when the sequence would exceed `max_len`.
TokenizedSentence tokenize(const Example& example, const Vocab& vocab, std::size_t max_len,
                           bool lang_token = true);
std::vector<TokenizedSentence> tokenize_all(const std::vector<Example>& examples, const Vocab& vocab,
                                            std::size_t max_len, bool lang_token = true);
/// Appends [PAD] up to `length`.
TokenizedSentence pad_to(TokenizedSentence sentence, std::size_t length);

}  // namespace mere

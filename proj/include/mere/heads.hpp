// SPDX-License-Identifier: Apache-2.0
//
// Relation classifier r_c = h_p W^r, relation embeddings E_r, and four
// relation-conditioned position scorers
//   score_y = tanh([h_i, r_e] W_y) U_y   for y in {head start, head end,
//                                              tail start, tail end}.
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mere/corpus.hpp"
#include "mere/params.hpp"

namespace mere {

class Rng;

enum EntitySlot : std::size_t { kHeadStart = 0, kHeadEnd = 1, kTailStart = 2, kTailEnd = 3 };
inline constexpr std::array<const char*, 4> kEntitySlotNames{"head_start", "head_end", "tail_start", "tail_end"};

class RelationHead {
 public:
  RelationHead() = default;
  /// Registers relation.classifier [d x I] and relation.embedding [I x d].
  RelationHead(ParamStore& store, std::size_t d, std::size_t num_relations, Rng& rng);

  std::size_t num_relations() const noexcept { return num_relations_; }
  /// Unmasked logits [I].
  Tensor logits(const Tensor& pooled) const;
  /// Row `relation` of E_r as a [d] tensor.
  Tensor embedding(std::size_t relation) const;

 private:
  std::size_t num_relations_ = 0;
  Tensor classifier_;
  Tensor embedding_;
};

class EntityHeads {
 public:
  EntityHeads() = default;
  /// Registers entity.<slot>.w [2d x d] and entity.<slot>.u [d x 1].
  EntityHeads(ParamStore& store, std::size_t d, Rng& rng);

  /// Four unmasked [m] score vectors for token features `h` [m x d] and
  /// relation feature `r_e` [d].
  std::array<Tensor, 4> scores(const Tensor& h, const Tensor& r_e) const;

 private:
  std::size_t d_ = 0;
  std::array<Tensor, 4> w_;
  std::array<Tensor, 4> u_;
};

/// Argmax of logits + mask with ties to the lower index. Throws DataError when
/// every entry is masked.
std::size_t masked_argmax(std::span<const double> logits, std::span<const double> additive_mask = {});

/// start = argmax(start_scores); end = argmax of end_scores over positions >= start.
Span decode_span(std::span<const double> start_scores, std::span<const double> end_scores);
/// Head and tail spans from four masked score vectors.
std::pair<Span, Span> decode_spans(const std::array<std::vector<double>, 4>& scores);

}  // namespace mere

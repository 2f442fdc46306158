// SPDX-License-Identifier: Apache-2.0
#include "mere/heads.hpp"

#include <cmath>
#include <limits>

#include "mere/errors.hpp"
#include "mere/ops.hpp"
#include "mere/rng.hpp"

namespace mere {

RelationHead::RelationHead(ParamStore& store, std::size_t d, std::size_t num_relations, Rng& rng)
    : num_relations_(num_relations) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  classifier_ = store.add_normal("relation.classifier", {d, num_relations}, sd, rng);
  embedding_ = store.add_normal("relation.embedding", {num_relations, d}, sd, rng);
}

Tensor RelationHead::logits(const Tensor& pooled) const {
  return reshape(matmul(pooled, classifier_), {num_relations_});
}

Tensor RelationHead::embedding(std::size_t relation) const {
  if (relation >= num_relations_) throw DataError("relation id " + std::to_string(relation) + " out of range");
  const std::size_t row[] = {relation};
  return reshape(gather_rows(embedding_, row), {embedding_.cols()});
}

EntityHeads::EntityHeads(ParamStore& store, std::size_t d, Rng& rng) : d_(d) {
  for (std::size_t y = 0; y < 4; ++y) {
    const std::string p = std::string("entity.") + kEntitySlotNames[y] + ".";
    w_[y] = store.add_normal(p + "w", {2 * d, d}, 1.0 / std::sqrt(static_cast<double>(2 * d)), rng);
    u_[y] = store.add_normal(p + "u", {d, 1}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  }
}

std::array<Tensor, 4> EntityHeads::scores(const Tensor& h, const Tensor& r_e) const {
  if (h.rank() != 2 || h.cols() != d_ || r_e.size() != d_) {
    throw DimensionError("entity scores: features " + shape_str(h.shape()) + " and relation feature " +
                         shape_str(r_e.shape()) + " do not match d=" + std::to_string(d_));
  }
  const Tensor parts[] = {h, broadcast_rows(r_e, h.rows())};
  const Tensor x = concat_cols(parts);
  std::array<Tensor, 4> out;
  for (std::size_t y = 0; y < 4; ++y) out[y] = reshape(matmul(tanh(matmul(x, w_[y])), u_[y]), {h.rows()});
  return out;
}

std::size_t masked_argmax(std::span<const double> logits, std::span<const double> mask) {
  if (!mask.empty() && mask.size() != logits.size()) throw DimensionError("masked_argmax: mask length mismatch");
  std::size_t best = logits.size();
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double v = logits[i] + (mask.empty() ? 0.0 : mask[i]);
    if (std::isnan(v)) throw NumericalError("masked_argmax: NaN score");
    if (v == -std::numeric_limits<double>::infinity()) continue;
    if (best == logits.size() || v > best_value) {
      best = i;
      best_value = v;
    }
  }
  if (best == logits.size()) throw DataError("masked_argmax: every position is masked");
  return best;
}

Span decode_span(std::span<const double> start_scores, std::span<const double> end_scores) {
  if (start_scores.size() != end_scores.size()) throw DimensionError("decode_span: score lengths differ");
  const std::size_t start = masked_argmax(start_scores);
  const std::size_t end = start + masked_argmax(end_scores.subspan(start));
  return Span{static_cast<int>(start), static_cast<int>(end)};
}

std::pair<Span, Span> decode_spans(const std::array<std::vector<double>, 4>& s) {
  return {decode_span(s[kHeadStart], s[kHeadEnd]), decode_span(s[kTailStart], s[kTailEnd])};
}

}  // namespace mere

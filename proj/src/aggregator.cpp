// SPDX-License-Identifier: Apache-2.0
#include "mere/aggregator.hpp"

#include <cmath>
#include <limits>

#include "mere/errors.hpp"
#include "mere/ops.hpp"
#include "mere/rng.hpp"

namespace mere {

Aggregator::Aggregator(ParamStore& store, std::size_t d, Rng& rng) : d_(d) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  wq_ = store.add_normal("aggregator.wq", {d, d}, sd, rng);
  wk_ = store.add_normal("aggregator.wk", {d, d}, sd, rng);
  wv_ = store.add_normal("aggregator.wv", {d, d}, sd, rng);
}

AggregateResult Aggregator::aggregate(const std::vector<Tensor>& members,
                                      const std::vector<std::vector<bool>>& masks) const {
  if (members.empty()) throw DimensionError("aggregate: empty group");
  if (!masks.empty() && masks.size() != members.size()) {
    throw DimensionError("aggregate: " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(members.size()) + " members");
  }
  AggregateResult result;
  std::vector<double> key_mask;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Tensor& h = members[i];
    if (h.rank() != 2 || h.cols() != d_) {
      throw DimensionError("aggregate: member shape " + shape_str(h.shape()) + " does not have " +
                           std::to_string(d_) + " columns");
    }
    if (!masks.empty() && masks[i].size() != h.rows()) {
      throw DimensionError("aggregate: mask length does not match member " + std::to_string(i));
    }
    result.boundaries.push_back(offset);
    for (std::size_t r = 0; r < h.rows(); ++r) {
      const bool keep = masks.empty() || masks[i][r];
      key_mask.push_back(keep ? 0.0 : -std::numeric_limits<double>::infinity());
    }
    offset += h.rows();
  }
  result.boundaries.push_back(offset);

  const Tensor h_cat = members.size() == 1 ? members[0] : concat_rows(members);
  const Tensor q = matmul(h_cat, wq_), k = matmul(h_cat, wk_), v = matmul(h_cat, wv_);
  const Tensor scores = add_row_constant(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_))), key_mask);
  result.attention = softmax_rows(scores);
  const Tensor out = matmul(result.attention, v);
  if (members.size() == 1) {
    result.outputs.push_back(out);
  } else {
    for (std::size_t i = 0; i < members.size(); ++i) {
      result.outputs.push_back(slice_rows(out, result.boundaries[i], members[i].rows()));
    }
  }
  return result;
}

Tensor Aggregator::aggregate_single(const Tensor& hidden, const std::vector<bool>& mask) const {
  std::vector<std::vector<bool>> masks;
  if (!mask.empty()) masks.push_back(mask);
  return aggregate({hidden}, masks).outputs[0];
}

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
//
// Single-head self-attention over the concatenated token rows of a group of
// sentences: softmax(Q K^T / sqrt(d)) V with Q = h W_q, K = h W_k, V = h W_v.
// Every token attends to every non-PAD token of every member.
#pragma once

#include <cstddef>
#include <vector>

#include "mere/params.hpp"

namespace mere {

class Rng;

struct AggregateResult {
  /// One [m_i x d] block per member, in input order.
  std::vector<Tensor> outputs;
  /// [(sum m_i) x (sum m_i)] attention probabilities.
  Tensor attention;
  /// Row offset of each member in the concatenation, plus the total.
  std::vector<std::size_t> boundaries;
};

class Aggregator {
 public:
  Aggregator() = default;
  /// Registers aggregator.wq / wk / wv.
  Aggregator(ParamStore& store, std::size_t d, Rng& rng);

  /// `masks[i]` marks attended (non-PAD) rows of member i; an empty mask list
  /// attends everywhere.
  AggregateResult aggregate(const std::vector<Tensor>& members,
                            const std::vector<std::vector<bool>>& masks = {}) const;
  Tensor aggregate_single(const Tensor& hidden, const std::vector<bool>& mask = {}) const;

 private:
  std::size_t d_ = 0;
  Tensor wq_, wk_, wv_;
};

}  // namespace mere

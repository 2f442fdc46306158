// SPDX-License-Identifier: Apache-2.0
//
// Small pre-norm transformer encoder: token + learned position embeddings,
// `blocks` x (LN -> multi-head self-attention -> residual, LN -> GELU FFN ->
// residual), final LN. Keys at [PAD] positions are masked.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mere/params.hpp"
#include "mere/vocab.hpp"

namespace mere {

class Rng;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d = 64;       // 768 in the full-size model
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t max_len = 48;  // 256 in the full-size model

  void validate() const;
};

struct EncoderOutput {
  Tensor hidden;  // [m x d]
  Tensor pooled;  // [d], the [CLS] row of hidden
};

class Encoder {
 public:
  Encoder() = default;
  /// Registers "encoder.*" parameters in `store`.
  Encoder(ParamStore& store, const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const noexcept { return config_; }

  EncoderOutput encode(const TokenizedSentence& sentence) const;
  /// Pads every sentence to the longest one, then encodes each.
  std::vector<EncoderOutput> encode_batch(std::span<const TokenizedSentence> batch) const;

 private:
  struct Block {
    Tensor ln1_gain, ln1_bias, wq, wk, wv, wo;
    Tensor ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  Tensor attention(const Block& block, const Tensor& x, std::span<const double> key_mask) const;

  EncoderConfig config_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  std::vector<Block> blocks_;
  Tensor final_gain_, final_bias_;
};

/// 0 for attended keys, -inf for [PAD].
std::vector<double> key_mask(const std::vector<bool>& attention_mask);

}  // namespace mere

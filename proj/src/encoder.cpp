// SPDX-License-Identifier: Apache-2.0
#include "mere/encoder.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "mere/errors.hpp"
#include "mere/ops.hpp"
#include "mere/rng.hpp"

namespace mere {

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("encoder vocab_size must be positive");
  if (d < 2) throw ConfigError("encoder d must be at least 2");
  if (blocks == 0 || heads == 0 || ffn == 0 || max_len < 3) throw ConfigError("encoder dimensions must be positive");
  if (d % heads != 0) throw ConfigError("encoder d must be divisible by heads");
}

std::vector<double> key_mask(const std::vector<bool>& attention_mask) {
  std::vector<double> mask(attention_mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = attention_mask[i] ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return mask;
}

Encoder::Encoder(ParamStore& store, const EncoderConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const std::size_t d = config.d;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  token_embedding_ = store.add_normal("encoder.token_embedding", {config.vocab_size, d}, sd, rng);
  position_embedding_ = store.add_normal("encoder.position_embedding", {config.max_len, d}, sd, rng);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string p = "encoder.block" + std::to_string(b) + ".";
    Block blk;
    blk.ln1_gain = store.add_constant(p + "ln1.gain", {d}, 1.0);
    blk.ln1_bias = store.add_zeros(p + "ln1.bias", {d});
    blk.wq = store.add_normal(p + "attn.wq", {d, d}, sd, rng);
    blk.wk = store.add_normal(p + "attn.wk", {d, d}, sd, rng);
    blk.wv = store.add_normal(p + "attn.wv", {d, d}, sd, rng);
    blk.wo = store.add_normal(p + "attn.wo", {d, d}, sd, rng);
    blk.ln2_gain = store.add_constant(p + "ln2.gain", {d}, 1.0);
    blk.ln2_bias = store.add_zeros(p + "ln2.bias", {d});
    blk.w1 = store.add_normal(p + "ffn.w1", {d, config.ffn}, sd, rng);
    blk.b1 = store.add_zeros(p + "ffn.b1", {config.ffn});
    blk.w2 = store.add_normal(p + "ffn.w2", {config.ffn, d}, 1.0 / std::sqrt(static_cast<double>(config.ffn)), rng);
    blk.b2 = store.add_zeros(p + "ffn.b2", {d});
    blocks_.push_back(blk);
  }
  final_gain_ = store.add_constant("encoder.final_ln.gain", {d}, 1.0);
  final_bias_ = store.add_zeros("encoder.final_ln.bias", {d});
}

Tensor Encoder::attention(const Block& blk, const Tensor& x, std::span<const double> mask) const {
  const std::size_t dh = config_.d / config_.heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = matmul(x, blk.wq), k = matmul(x, blk.wk), v = matmul(x, blk.wv);
  std::vector<Tensor> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh), kh = slice_cols(k, h * dh, dh), vh = slice_cols(v, h * dh, dh);
    const Tensor scores = add_row_constant(scale(matmul_nt(qh, kh), scale_factor), mask);
    heads.push_back(matmul(softmax_rows(scores), vh));
  }
  return matmul(config_.heads == 1 ? heads[0] : concat_cols(heads), blk.wo);
}

EncoderOutput Encoder::encode(const TokenizedSentence& s) const {
  const std::size_t m = s.length();
  if (m == 0) throw DataError("encode: empty sentence");
  if (m > config_.max_len) {
    throw DataError("encode: " + std::to_string(m) + " positions exceed max_len " + std::to_string(config_.max_len));
  }
  for (std::size_t id : s.input_ids) {
    if (id >= config_.vocab_size) throw DataError("encode: token id " + std::to_string(id) + " out of vocabulary range");
  }
  std::vector<std::size_t> positions(m);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  const auto mask = key_mask(s.attention_mask);

  Tensor x = add(gather_rows(token_embedding_, s.input_ids), gather_rows(position_embedding_, positions));
  for (const auto& blk : blocks_) {
    x = add(x, attention(blk, layer_norm(x, blk.ln1_gain, blk.ln1_bias), mask));
    const Tensor hdn = gelu(add_bias(matmul(layer_norm(x, blk.ln2_gain, blk.ln2_bias), blk.w1), blk.b1));
    x = add(x, add_bias(matmul(hdn, blk.w2), blk.b2));
  }
  EncoderOutput out;
  out.hidden = layer_norm(x, final_gain_, final_bias_);
  out.pooled = reshape(slice_rows(out.hidden, 0, 1), {config_.d});
  return out;
}

std::vector<EncoderOutput> Encoder::encode_batch(std::span<const TokenizedSentence> batch) const {
  std::size_t m = 0;
  for (const auto& s : batch) m = std::max(m, s.length());
  std::vector<EncoderOutput> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(encode(pad_to(s, m)));
  return out;
}

}  // namespace mere

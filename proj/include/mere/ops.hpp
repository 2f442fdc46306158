// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations over 2-D tensors. Rank-1 inputs are treated as a
// single row. Every op checks shapes and throws DimensionError naming the
// offending shapes.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mere/tensor.hpp"

namespace mere {

inline constexpr double kLayerNormEpsilon = 1e-5;

/// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m x k] * b[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
/// x[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x + constant row (no gradient to the constant); entries may be -inf.
Tensor add_row_constant(const Tensor& x, std::span<const double> row);
Tensor scale(const Tensor& x, double factor);
/// x * s for a single-element tensor s; gradient flows to both.
Tensor mul_scalar(const Tensor& x, const Tensor& s);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
/// tanh approximation of GELU.
Tensor gelu(const Tensor& x);

/// Softmax over the last dimension, max-subtracted. Rows may contain -inf
/// entries but need at least one finite value. NaN input throws.
Tensor softmax_rows(const Tensor& x);

/// Per-row normalization to zero mean / unit variance, then gain * x + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = kLayerNormEpsilon);

/// Rows of `table` selected by `ids`.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
/// Repeats a single row `count` times.
Tensor broadcast_rows(const Tensor& row, std::size_t count);
/// Single element as a [1] tensor.
Tensor element(const Tensor& x, std::size_t index);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);

/// -log softmax(logits + mask)[gold]. `additive_mask` is empty or holds one
/// entry per logit (0 or -inf). Throws DataError when the gold entry is masked.
Tensor cross_entropy(const Tensor& logits, std::size_t gold,
                     std::span<const double> additive_mask = {});

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
//
// Straight-line reference implementations for tests. Nothing here includes
// the library headers: inputs are nested vectors and every sum is
// accumulated in long double.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mere::oracle {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;

struct OracleReport {
  std::string name;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string line() const;
};

/// Element-wise comparison; relative error uses max(|want|, 1) as the scale
/// and `tolerance` bounds the absolute error.
OracleReport compare(const std::string& name, const Vector& got, const Vector& want, double tolerance);
OracleReport compare(const std::string& name, const Matrix& got, const Matrix& want, double tolerance);

Matrix matmul(const Matrix& a, const Matrix& b);
Vector softmax(const Vector& logits);
double cross_entropy(const Vector& logits, std::size_t gold);
Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, double epsilon = 1e-5);
double gelu(double x);

/// softmax(h Wq (h Wk)^T / sqrt(d)) h Wv; keys with mask[j] == false are
/// excluded. An empty mask keeps every key.
Matrix attention(const Matrix& h, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                 const std::vector<bool>& mask = {});

struct AdapterLayer {
  Matrix wu, wd;
  Vector gain, bias;
};
/// LN(relu(h Wu) Wd + h), applied layer by layer.
Matrix adapter(const Matrix& h, const std::vector<AdapterLayer>& layers);

struct EncoderBlock {
  Vector ln1_gain, ln1_bias;
  Matrix wq, wk, wv, wo;
  Vector ln2_gain, ln2_bias;
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};
struct EncoderWeights {
  Matrix token_embedding, position_embedding;
  std::vector<EncoderBlock> blocks;
  Vector final_gain, final_bias;
  std::size_t heads = 1;
};
Matrix encoder_forward(const EncoderWeights& w, const std::vector<std::size_t>& ids, const std::vector<bool>& mask);

/// tanh([h_i, r] W) U for every row i.
Vector entity_scores(const Matrix& h, const Vector& r, const Matrix& w, const Matrix& u);
/// h_p W.
Vector relation_logits(const Vector& pooled, const Matrix& w);

struct AdamWStep {
  double lr = 1e-3, weight_decay = 0.1, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};
/// First update of a scalar parameter from zero moments.
double adamw_first_step(double p, double g, const AdamWStep& c);

/// Exhaustive best (start, end) with start <= end by summed score; ties keep
/// the first pair in row-major order.
std::pair<std::size_t, std::size_t> pair_argmax(const Vector& start, const Vector& end);

/// Pearson statistic sum (o - e)^2 / e.
double chi_square(const std::vector<std::size_t>& observed, const Vector& expected);
/// Upper tail critical value of chi-square with `dof` degrees of freedom at
/// z standard deviations (Wilson-Hilferty).
double chi_square_critical(std::size_t dof, double z);

/// Central differences of f at x.
Vector finite_difference(const Vector& x, double step, const std::function<double(const Vector&)>& f);

}  // namespace mere::oracle

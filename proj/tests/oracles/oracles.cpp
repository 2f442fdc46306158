// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mere::oracle {

using Real = long double;

std::string OracleReport::line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-40s abs=%.3e rel=%.3e tol=%.1e %s", name.c_str(), max_abs_error, max_rel_error,
                tolerance, passed ? "ok" : "FAIL");
  return buf;
}

OracleReport compare(const std::string& name, const Vector& got, const Vector& want, double tolerance) {
  OracleReport r{name, 0.0, 0.0, tolerance, got.size() == want.size()};
  if (!r.passed) {
    r.max_abs_error = r.max_rel_error = std::numeric_limits<double>::infinity();
    return r;
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double a = std::fabs(got[i] - want[i]);
    r.max_abs_error = std::max(r.max_abs_error, a);
    r.max_rel_error = std::max(r.max_rel_error, a / std::max(std::fabs(want[i]), 1.0));
  }
  r.passed = r.max_abs_error <= tolerance;
  return r;
}

OracleReport compare(const std::string& name, const Matrix& got, const Matrix& want, double tolerance) {
  Vector g, w;
  for (const auto& row : got) g.insert(g.end(), row.begin(), row.end());
  for (const auto& row : want) w.insert(w.end(), row.begin(), row.end());
  if (got.size() != want.size()) w.clear();
  return compare(name, g, w, tolerance);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::size_t n = b.empty() ? 0 : b[0].size();
  Matrix out(a.size(), Vector(n));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t k = 0; k < b.size(); ++k) acc += static_cast<Real>(a[i][k]) * b[k][j];
      out[i][j] = static_cast<double>(acc);
    }
  }
  return out;
}

Vector softmax(const Vector& logits) {
  Real mx = -std::numeric_limits<Real>::infinity();
  for (double v : logits) mx = std::max<Real>(mx, v);
  Real total = 0;
  std::vector<Real> e(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::isinf(logits[i]) ? 0 : std::exp(static_cast<Real>(logits[i]) - mx);
    total += e[i];
  }
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(e[i] / total);
  return out;
}

double cross_entropy(const Vector& logits, std::size_t gold) {
  Real total = 0;
  for (double v : logits) total += std::exp(static_cast<Real>(v));
  return static_cast<double>(std::log(total) - logits[gold]);
}

Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, double epsilon) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t d = x[i].size();
    Real mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= d;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= d;
    const Real inv = 1 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < d; ++j) out[i][j] = static_cast<double>(gain[j] * ((x[i][j] - mean) * inv) + bias[j]);
  }
  return out;
}

double gelu(double x) {
  const Real c = std::sqrt(2.0L / 3.14159265358979323846264338327950288L);
  const Real v = x;
  return static_cast<double>(0.5L * v * (1 + std::tanh(c * (v + 0.044715L * v * v * v))));
}

static Matrix columns(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.size(), Vector(count));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i][j] = m[i][begin + j];
  }
  return out;
}

static Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<bool>& mask) {
  const std::size_t n = q.size(), dk = q.empty() ? 0 : q[0].size(), dv = v.empty() ? 0 : v[0].size();
  Matrix out(n, Vector(dv));
  for (std::size_t i = 0; i < n; ++i) {
    Vector scores(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) {
      if (!mask.empty() && !mask[j]) {
        scores[j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      Real dot = 0;
      for (std::size_t c = 0; c < dk; ++c) dot += static_cast<Real>(q[i][c]) * k[j][c];
      scores[j] = static_cast<double>(dot / std::sqrt(static_cast<Real>(dk)));
    }
    const Vector p = softmax(scores);
    for (std::size_t c = 0; c < dv; ++c) {
      Real acc = 0;
      for (std::size_t j = 0; j < k.size(); ++j) acc += static_cast<Real>(p[j]) * v[j][c];
      out[i][c] = static_cast<double>(acc);
    }
  }
  return out;
}

Matrix attention(const Matrix& h, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                 const std::vector<bool>& mask) {
  return scaled_dot_attention(matmul(h, wq), matmul(h, wk), matmul(h, wv), mask);
}

Matrix adapter(const Matrix& h, const std::vector<AdapterLayer>& layers) {
  Matrix x = h;
  for (const auto& layer : layers) {
    Matrix up = matmul(x, layer.wu);
    for (auto& row : up) {
      for (double& v : row) v = std::max(v, 0.0);
    }
    Matrix down = matmul(up, layer.wd);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x[i].size(); ++j) down[i][j] += x[i][j];
    }
    x = layer_norm(down, layer.gain, layer.bias);
  }
  return x;
}

Matrix encoder_forward(const EncoderWeights& w, const std::vector<std::size_t>& ids, const std::vector<bool>& mask) {
  const std::size_t m = ids.size(), d = w.token_embedding[0].size();
  Matrix x(m, Vector(d));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i][j] = w.token_embedding[ids[i]][j] + w.position_embedding[i][j];
  }
  const std::size_t dh = d / w.heads;
  for (const auto& b : w.blocks) {
    const Matrix n1 = layer_norm(x, b.ln1_gain, b.ln1_bias);
    const Matrix q = matmul(n1, b.wq), k = matmul(n1, b.wk), v = matmul(n1, b.wv);
    Matrix cat(m, Vector(d));
    for (std::size_t hd = 0; hd < w.heads; ++hd) {
      const Matrix o = scaled_dot_attention(columns(q, hd * dh, dh), columns(k, hd * dh, dh), columns(v, hd * dh, dh), mask);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < dh; ++j) cat[i][hd * dh + j] = o[i][j];
      }
    }
    const Matrix attn = matmul(cat, b.wo);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i][j] += attn[i][j];
    }
    Matrix hidden = matmul(layer_norm(x, b.ln2_gain, b.ln2_bias), b.w1);
    for (auto& row : hidden) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = gelu(row[j] + b.b1[j]);
    }
    const Matrix ffn = matmul(hidden, b.w2);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i][j] += ffn[i][j] + b.b2[j];
    }
  }
  return layer_norm(x, w.final_gain, w.final_bias);
}

Vector entity_scores(const Matrix& h, const Vector& r, const Matrix& w, const Matrix& u) {
  Vector out(h.size());
  const std::size_t d = u.size();
  for (std::size_t i = 0; i < h.size(); ++i) {
    Vector x = h[i];
    x.insert(x.end(), r.begin(), r.end());
    Real score = 0;
    for (std::size_t c = 0; c < d; ++c) {
      Real pre = 0;
      for (std::size_t k = 0; k < x.size(); ++k) pre += static_cast<Real>(x[k]) * w[k][c];
      score += std::tanh(pre) * u[c][0];
    }
    out[i] = static_cast<double>(score);
  }
  return out;
}

Vector relation_logits(const Vector& pooled, const Matrix& w) { return matmul(Matrix{pooled}, w)[0]; }

double adamw_first_step(double p, double g, const AdamWStep& c) {
  const Real m = (1 - static_cast<Real>(c.beta1)) * g;
  const Real v = (1 - static_cast<Real>(c.beta2)) * g * g;
  const Real m_hat = m / (1 - static_cast<Real>(c.beta1));
  const Real v_hat = v / (1 - static_cast<Real>(c.beta2));
  return static_cast<double>(p - c.lr * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * static_cast<Real>(p)));
}

std::pair<std::size_t, std::size_t> pair_argmax(const Vector& start, const Vector& end) {
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < start.size(); ++s) {
    for (std::size_t e = s; e < end.size(); ++e) {
      if (start[s] + end[e] > best_score) {
        best_score = start[s] + end[e];
        best = {s, e};
      }
    }
  }
  return best;
}

double chi_square(const std::vector<std::size_t>& observed, const Vector& expected) {
  Real total = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const Real diff = static_cast<Real>(observed[i]) - expected[i];
    total += diff * diff / expected[i];
  }
  return static_cast<double>(total);
}

double chi_square_critical(std::size_t dof, double z) {
  const double k = static_cast<double>(dof);
  const double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
  return k * t * t * t;
}

Vector finite_difference(const Vector& x, double step, const std::function<double(const Vector&)>& f) {
  Vector grad(x.size());
  Vector probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace mere::oracle

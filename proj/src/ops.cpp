// SPDX-License-Identifier: Apache-2.0
#include "mere/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mere/errors.hpp"

namespace mere {

namespace {

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, bool track) { return Tensor::zeros(std::move(shape), track); }

void record(std::function<void()> fn) { active_tape()->record(std::move(fn)); }

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(a, bt.data(), c, m, k, n);
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows() || b.rank() != 2) shape_mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const bool track = tracking({&a, &b});
  Tensor out = make_output(matrix_shape(m, n), track);
  gemm_nn(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);
  if (track) {
    record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      if (a.requires_grad()) gemm_nt(g, b.data().data(), a.grad_buffer().data(), m, n, k);
      if (b.requires_grad()) gemm_tn(a.data().data(), g, b.grad_buffer().data(), m, k, n);
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const bool track = tracking({&a, &b});
  Tensor out = make_output(matrix_shape(m, n), track);
  gemm_nt(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);
  if (track) {
    record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      if (a.requires_grad()) gemm_nn(g, b.data().data(), a.grad_buffer().data(), m, n, k);
      if (b.requires_grad()) gemm_tn(g, a.data().data(), b.grad_buffer().data(), m, n, k);
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const bool track = tracking({&x});
  Tensor out = make_output(matrix_shape(n, m), track);
  auto o = out.mutable_data();
  auto d = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = d[i * n + j];
  }
  if (track) {
    record([x, out, m, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a, b);
  const bool track = tracking({&a, &b});
  Tensor out = make_output(a.shape(), track);
  auto o = out.mutable_data();
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] + db[i];
  if (track) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols()) shape_mismatch("add_bias", x, bias);
  const std::size_t m = x.rows(), n = x.cols();
  const bool track = tracking({&x, &bias});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data(), db = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = dx[i * n + j] + db[j];
  }
  if (track) {
    record([x, bias, out, m, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      }
    });
  }
  return out;
}

Tensor add_row_constant(const Tensor& x, std::span<const double> row) {
  if (row.size() != x.cols()) {
    throw DimensionError("add_row_constant: row of length " + std::to_string(row.size()) +
                         " does not match " + shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = dx[i * n + j] + row[j];
  }
  if (track) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = dx[i] * factor;
  if (track) {
    record([x, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) shape_mismatch("mul_scalar", x, s);
  const bool track = tracking({&x, &s});
  Tensor out = make_output(x.shape(), track);
  const double sv = s.value(0);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = dx[i] * sv;
  if (track) {
    record([x, s, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dx = x.data();
      if (x.requires_grad()) {
        const double sv = s.value(0);
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * dx[i];
        s.grad_buffer()[0] += acc;
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = dx[i] > 0.0 ? dx[i] : 0.0;
  if (track) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dx = x.data();
      auto gx = x.grad_buffer();
      // relu'(0) = 0
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (dx[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(dx[i]);
  if (track) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = dx[i];
    o[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  if (track) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dx = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = dx[i];
        const double t = std::tanh(kC * (v + kA * v * v * v));
        const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
        gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = dx.data() + i * n;
    double* orow = o.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j])) throw NumericalError("softmax_rows: NaN input");
      mx = std::max(mx, row[j]);
    }
    if (!std::isfinite(mx)) throw NumericalError("softmax_rows: row has no finite entry");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= total;
  }
  if (track) {
    record([x, out, m, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  const std::size_t m = x.rows(), d = x.cols();
  if (d < 2) throw DimensionError("layer_norm: needs at least 2 features, got " + shape_str(x.shape()));
  if (gain.size() != d) shape_mismatch("layer_norm", x, gain);
  if (bias.size() != d) shape_mismatch("layer_norm", x, bias);
  const bool track = tracking({&x, &gain, &bias});
  Tensor out = make_output(x.shape(), track);
  std::vector<double> xhat(m * d);
  std::vector<double> rstd(m);
  auto dx = x.data();
  auto dg = gain.data(), db = bias.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = dx.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * rstd[i];
      o[i * d + j] = dg[j] * xhat[i * d + j] + db[j];
    }
  }
  if (track) {
    record([x, gain, bias, out, m, d, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dg = gain.data();
      if (gain.requires_grad()) {
        auto gg = gain.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
        }
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        std::vector<double> dxhat(d);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = g[i * d + j] * dg[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[i * d + j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            gx[i * d + j] += rstd[i] * (dxhat[j] - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  const std::size_t n = table.cols(), vocab = table.rows();
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  for (auto id : ids) {
    if (id >= vocab) {
      throw DimensionError("gather_rows: id " + std::to_string(id) + " out of range for table " +
                           shape_str(table.shape()));
    }
  }
  const bool track = tracking({&table});
  Tensor out = make_output(matrix_shape(ids.size(), n), track);
  auto o = out.mutable_data();
  auto dt = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(dt.data() + ids[i] * n, n, o.data() + i * n);
  }
  if (track) {
    record([table, out, n, ids = std::vector<std::size_t>(ids.begin(), ids.end())]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) gt[ids[i] * n + j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t n = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  const bool track = tracking({&x});
  Tensor out = make_output(matrix_shape(count, n), track);
  std::copy_n(x.data().data() + begin * n, count * n, out.mutable_data().data());
  if (track) {
    record([x, out, begin, count, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < count * n; ++i) gx[begin * n + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  const bool track = tracking({&x});
  Tensor out = make_output(matrix_shape(m, count), track);
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(dx.data() + i * n + begin, count, o.data() + i * count);
  if (track) {
    record([x, out, begin, count, m, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
      }
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.cols() != n) shape_mismatch("concat_rows", parts[0], p);
    total += p.rows();
    track = track || tracking({&p});
  }
  Tensor out = make_output(matrix_shape(total, n), track);
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), o.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  if (track) {
    record([parts = std::vector<Tensor>(parts.begin(), parts.end()), out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_mismatch("concat_cols", parts[0], p);
    total += p.cols();
    track = track || tracking({&p});
  }
  Tensor out = make_output(matrix_shape(m, total), track);
  auto o = out.mutable_data();
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto dp = p.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(dp.data() + i * w, w, o.data() + i * total + col);
    col += w;
  }
  if (track) {
    record([parts = std::vector<Tensor>(parts.begin(), parts.end()), out, m, total]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t col = 0;
      for (auto& p : parts) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + col + j];
          }
        }
        col += w;
      }
    });
  }
  return out;
}

Tensor broadcast_rows(const Tensor& row, std::size_t count) {
  if (row.rows() != 1 || count == 0) {
    throw DimensionError("broadcast_rows: expected a single row, got " + shape_str(row.shape()));
  }
  const std::size_t n = row.cols();
  const bool track = tracking({&row});
  Tensor out = make_output(matrix_shape(count, n), track);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < count; ++i) std::copy_n(row.data().data(), n, o.data() + i * n);
  if (track) {
    record([row, out, count, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gr = row.grad_buffer();
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor element(const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw DimensionError("element: index " + std::to_string(index) + " out of range for " +
                         shape_str(x.shape()));
  }
  const bool track = tracking({&x});
  Tensor out = make_output({1}, track);
  out.mutable_data()[0] = x.value(index);
  if (track) {
    record([x, out, index]() mutable {
      if (!out.has_grad()) return;
      x.grad_buffer()[index] += out.grad()[0];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const bool track = tracking({&x});
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                            track);
  if (track) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool track = tracking({&x});
  Tensor out = make_output({1}, track);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.mutable_data()[0] = acc;
  if (track) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::size_t gold, std::span<const double> additive_mask) {
  const std::size_t n = logits.size();
  if (logits.rows() != 1) {
    throw DimensionError("cross_entropy: expected a single row of logits, got " +
                         shape_str(logits.shape()));
  }
  if (gold >= n) {
    throw DimensionError("cross_entropy: gold index " + std::to_string(gold) + " out of range for " +
                         shape_str(logits.shape()));
  }
  if (!additive_mask.empty() && additive_mask.size() != n) {
    throw DimensionError("cross_entropy: mask length " + std::to_string(additive_mask.size()) +
                         " does not match " + shape_str(logits.shape()));
  }
  std::vector<double> z(logits.data().begin(), logits.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(z[i])) throw NumericalError("cross_entropy: NaN logit");
    if (!additive_mask.empty()) z[i] += additive_mask[i];
  }
  if (!std::isfinite(z[gold])) {
    throw DataError("cross_entropy: gold index " + std::to_string(gold) + " is masked out");
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(z[i] - mx);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  const double loss = std::log(total) + mx - z[gold];
  const bool track = tracking({&logits});
  Tensor out = make_output({1}, track);
  out.mutable_data()[0] = loss;
  if (track) {
    record([logits, out, gold, probs = std::move(probs)]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto gl = logits.grad_buffer();
      for (std::size_t i = 0; i < probs.size(); ++i) {
        gl[i] += g * (probs[i] - (i == gold ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

}  // namespace mere

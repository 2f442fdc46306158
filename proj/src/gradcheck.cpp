// SPDX-License-Identifier: Apache-2.0
#include "mere/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mere/rng.hpp"

namespace mere {

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> inputs,
                                  const GradCheckOptions& options) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    std::vector<std::size_t> coords;
    if (options.max_coords_per_tensor == 0 || options.max_coords_per_tensor >= t.size()) {
      coords.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) coords[i] = i;
    } else {
      coords = rng.sample_without_replacement(t.size(), options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto data = t.mutable_data();
    for (std::size_t c : coords) {
      const double original = data[c];
      data[c] = original + options.step;
      const double plus = loss_fn().item();
      data[c] = original - options.step;
      const double minus = loss_fn().item();
      data[c] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double exact = analytic[ti][c];
      const double abs_err = std::abs(numeric - exact);
      const double denom = std::max({std::abs(numeric), std::abs(exact), options.denominator_floor});
      const double rel_err = abs_err / denom;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err >= report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst = std::to_string(ti) + "[" + std::to_string(c) + "]";
      }
      ++report.coordinates;
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace mere

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "mere/tensor.hpp"

namespace mere {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Floor on the relative-error denominator so exact zeros compare sanely.
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  std::size_t coordinates = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor index>[<coordinate>]"
  bool passed = false;
};

/// Compares reverse-mode gradients of `loss_fn` with central differences.
/// `loss_fn` must build its graph from `inputs` and return a single-element
/// tensor; it is called once under a tape and then repeatedly without one.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  std::span<Tensor> inputs, const GradCheckOptions& options = {});

}  // namespace mere

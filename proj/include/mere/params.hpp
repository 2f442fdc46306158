// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mere/tensor.hpp"

namespace mere {

class Rng;

struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

/// Named parameter registry in registration order. A frozen parameter does
/// not require gradients, so no gradient is ever computed for it.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Tensor add_zeros(const std::string& name, Shape shape);
  Tensor add_constant(const std::string& name, Shape shape, double value);
  Tensor add_normal(const std::string& name, Shape shape, double stddev, Rng& rng);

  bool contains(std::string_view name) const;
  Tensor get(std::string_view name) const;
  const Parameter& parameter(std::string_view name) const;

  void set_frozen(std::string_view name, bool frozen);
  bool is_frozen(std::string_view name) const;
  /// Freezes or unfreezes every parameter whose name starts with `prefix`.
  std::size_t set_frozen_prefix(std::string_view prefix, bool frozen);

  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t element_count() const;

  /// Zero-filled gradient buffers on every unfrozen parameter.
  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  Tensor add(const std::string& name, Tensor value);
  std::size_t index_of(std::string_view name) const;

  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace mere

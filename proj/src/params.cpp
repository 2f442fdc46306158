// SPDX-License-Identifier: Apache-2.0
#include "mere/params.hpp"

#include <algorithm>

#include "mere/errors.hpp"
#include "mere/rng.hpp"

namespace mere {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, value, false});
  return value;
}

Tensor ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::fill(t.mutable_data().begin(), t.mutable_data().end(), value);
  return add(name, t);
}

Tensor ParamStore::add_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.normal(0.0, stddev);
  return add(name, t);
}

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

Tensor ParamStore::get(std::string_view name) const { return params_[index_of(name)].value; }

const Parameter& ParamStore::parameter(std::string_view name) const {
  return params_[index_of(name)];
}

void ParamStore::set_frozen(std::string_view name, bool frozen) {
  auto& p = params_[index_of(name)];
  p.frozen = frozen;
  p.value.set_requires_grad(!frozen);
  if (frozen) p.value.clear_grad();
}

bool ParamStore::is_frozen(std::string_view name) const { return params_[index_of(name)].frozen; }

std::size_t ParamStore::set_frozen_prefix(std::string_view prefix, bool frozen) {
  std::size_t count = 0;
  for (auto& p : params_) {
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) {
      set_frozen(p.name, frozen);
      ++count;
    }
  }
  return count;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    if (!p.frozen) p.value.zero_grad();
  }
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void ParamStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) throw DataError("snapshot does not match parameter count");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].value.mutable_data();
    if (values[i].size() != dst.size()) {
      throw DataError("snapshot size mismatch for parameter " + params_[i].name);
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace mere

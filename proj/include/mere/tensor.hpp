// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of doubles with a reverse-mode tape.
//
// Tensors are cheap handles; copies share storage. Operations in ops.hpp
// record a backward closure on the thread's active Tape whenever one of
// their inputs requires a gradient. With no active tape nothing is recorded,
// which is how inference runs.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mere {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double value(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Allocates a zero gradient buffer on first use.
  std::span<double> grad_buffer() const;
  void zero_grad();
  void clear_grad();

  /// Copy of the values with no gradient tracking.
  Tensor detach() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Records backward closures in creation order and replays them in reverse.
class Tape {
 public:
  void record(std::function<void()> backward);
  /// Seeds d(loss)/d(loss) = 1, runs every recorded closure in reverse and
  /// clears the tape. `loss` must hold a single element.
  void backward(Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::function<void()>> entries_;
};

/// Makes `tape` the active tape of the calling thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

}  // namespace mere

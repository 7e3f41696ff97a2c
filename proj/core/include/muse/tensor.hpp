// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "muse/instrument.hpp"

namespace muse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Owning scalar storage that reports its size to the active instrument
// counters. Release is only reported to the counters it was charged to.
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(std::size_t n, double fill = 0.0) : values_(n, fill) { charge(); }
  explicit Buffer(std::vector<double> values) : values_(std::move(values)) { charge(); }
  Buffer(const Buffer& other) : values_(other.values_) { charge(); }
  Buffer(Buffer&& other) noexcept
      : values_(std::move(other.values_)), owner_(other.owner_) {
    other.owner_ = nullptr;
    other.values_.clear();
  }
  Buffer& operator=(const Buffer& other) {
    if (this != &other) {
      release();
      values_ = other.values_;
      charge();
    }
    return *this;
  }
  Buffer& operator=(Buffer&& other) noexcept {
    if (this != &other) {
      release();
      values_ = std::move(other.values_);
      owner_ = other.owner_;
      other.owner_ = nullptr;
      other.values_.clear();
    }
    return *this;
  }
  ~Buffer() { release(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  void charge() {
    owner_ = instrument::current();
    if (owner_ != nullptr) owner_->on_alloc(static_cast<std::int64_t>(values_.size()));
  }
  void release() {
    if (owner_ != nullptr && owner_ == instrument::current()) {
      owner_->on_free(static_cast<std::int64_t>(values_.size()));
    }
    owner_ = nullptr;
  }

  std::vector<double> values_;
  instrument::Counters* owner_ = nullptr;
};

}  // namespace detail

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor from(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.values().size(); }
  bool empty() const { return numel() == 0; }

  std::span<const double> data() const { return data_.values(); }
  std::span<double> data() { return data_.values(); }
  const double* ptr() const { return data_.values().data(); }
  double* ptr() { return data_.values().data(); }

  double operator[](std::size_t i) const { return data_.values()[i]; }
  double& operator[](std::size_t i) { return data_.values()[i]; }

  /// Multi-index access, bounds-checked.
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  /// Same values under a new shape of equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Scalar value of a single-element tensor.
  double item() const;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_.values() == b.data_.values();
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  detail::Buffer data_;
};

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace muse

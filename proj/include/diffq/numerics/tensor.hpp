// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace diffq::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with value semantics. Copies share the
// underlying buffer; mutable_data() detaches before handing out write access,
// so a Tensor observed through one handle never changes under another.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor from(std::initializer_list<double> values);

  bool defined() const noexcept { return static_cast<bool>(data_); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }

  std::span<const double> data() const noexcept;
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  Tensor reshape(Shape shape) const;
  Tensor clone() const;

  bool all_finite() const noexcept;
  double min() const;
  double max() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

// Bitwise equality of shape and every element.
bool identical(const Tensor& a, const Tensor& b) noexcept;

// Stacks equally shaped tensors along a new leading axis, or concatenates
// along axis 0 when `concat` is set.
Tensor stack(std::span<const Tensor> parts, bool concat = false);

// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);

}  // namespace diffq::numerics

// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "diffq/errors.hpp"

namespace diffq::numerics {

std::size_t shape_size(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_ = std::make_shared<std::vector<double>>(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_shape(shape_);
  if (values.size() != shape_size(shape_))
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values.size()) +
                     " values");
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return shape_[axis];
}

std::span<const double> Tensor::data() const noexcept {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::span<double> Tensor::mutable_data() {
  if (!data_) return {};
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_size(shape) != size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  check_shape(shape);
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::clone() const {
  Tensor out;
  out.shape_ = shape_;
  if (data_) out.data_ = std::make_shared<std::vector<double>>(*data_);
  return out;
}

bool Tensor::all_finite() const noexcept {
  for (double v : data())
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::min() const {
  if (!size()) throw ShapeError("min() of empty tensor");
  return *std::min_element(data_->begin(), data_->end());
}

double Tensor::max() const {
  if (!size()) throw ShapeError("max() of empty tensor");
  return *std::max_element(data_->begin(), data_->end());
}

bool identical(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape() != b.shape() || a.size() != b.size()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

Tensor stack(std::span<const Tensor> parts, bool concat) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  const Shape& inner = parts.front().shape();
  std::vector<double> values;
  values.reserve(parts.size() * parts.front().size());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (concat) {
      if (p.rank() != inner.size() || !std::equal(p.shape().begin() + 1, p.shape().end(), inner.begin() + 1))
        throw ShapeError("concat of mismatched shapes " + shape_string(p.shape()) + " and " + shape_string(inner));
      rows += p.dim(0);
    } else if (p.shape() != inner) {
      throw ShapeError("stack of mismatched shapes " + shape_string(p.shape()) + " and " + shape_string(inner));
    }
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  Shape shape;
  if (concat) {
    shape = inner;
    shape[0] = rows;
  } else {
    shape.push_back(parts.size());
    shape.insert(shape.end(), inner.begin(), inner.end());
  }
  return Tensor(std::move(shape), std::move(values));
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (begin >= end || end > t.dim(0)) throw ShapeError("invalid row slice");
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = end - begin;
  return Tensor(std::move(shape),
                std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                                    t.data().begin() + static_cast<std::ptrdiff_t>(end * row)));
}

}  // namespace diffq::numerics

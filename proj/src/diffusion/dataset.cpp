// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "diffq/errors.hpp"

namespace diffq::diffusion {

using numerics::Tensor;

Tensor SyntheticDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ShapeError("dataset batch: no indices");
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (std::size_t i : indices) parts.push_back(samples.at(i));
  return numerics::stack(parts);
}

SyntheticDataset make_synthetic_dataset(std::size_t count, std::size_t image_size, std::uint64_t seed) {
  if (count == 0) throw ConfigError("dataset size must be positive");
  if (image_size == 0) throw ConfigError("image size must be positive");
  SyntheticDataset ds;
  ds.seed = seed;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double n = static_cast<double>(image_size);

  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> img(image_size * image_size, 0.0);
    const int shapes = 1 + static_cast<int>(unit(gen) * 2.0);
    for (int s = 0; s < shapes; ++s) {
      if (unit(gen) < 0.5) {
        const double cy = unit(gen) * (n - 1), cx = unit(gen) * (n - 1);
        const double sd = 0.8 + unit(gen) * 1.2 * n / 8.0;
        for (std::size_t y = 0; y < image_size; ++y)
          for (std::size_t x = 0; x < image_size; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            img[y * image_size + x] += std::exp(-(dy * dy + dx * dx) / (2.0 * sd * sd));
          }
      } else {
        const bool horizontal = unit(gen) < 0.5;
        const auto width = 1 + static_cast<std::size_t>(unit(gen) * 2.0);
        const auto pos = static_cast<std::size_t>(unit(gen) * static_cast<double>(image_size - width + 1));
        const double level = 0.6 + 0.4 * unit(gen);
        for (std::size_t a = pos; a < std::min(pos + width, image_size); ++a)
          for (std::size_t b = 0; b < image_size; ++b) img[horizontal ? a * image_size + b : b * image_size + a] += level;
      }
    }
    for (double& v : img) v = 2.0 * std::min(v, 1.0) - 1.0;
    ds.samples.emplace_back(numerics::Shape{1, image_size, image_size}, std::move(img));
  }
  return ds;
}

}  // namespace diffq::diffusion

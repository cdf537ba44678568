#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "sharppath/errors.hpp"

namespace sharppath {

/// Dense row-major tensor of 64-bit floats. product(shape) == data.size()
/// always holds; ops that could violate it throw instead.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw ConfigError("tensor shape/data size mismatch");
  }

  static Tensor zeros(std::vector<int> s) {
    const int64_t n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  }

  static int64_t numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (const int e : s) {
      if (e < 0) throw ConfigError("negative tensor extent");
      n *= e;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rows() const { return shape.empty() ? 1 : shape.front(); }
  /// Extent product of all dimensions after the first.
  int64_t row_width() const { return shape.empty() ? 1 : size() / shape.front(); }
  bool is_scalar() const { return size() == 1; }
  double scalar() const {
    if (!is_scalar()) throw ConfigError("tensor is not a scalar");
    return data[0];
  }
};

/// Flat vector of all model parameters; the shared coordinate system for
/// gradients, eigenvectors, and updates.
using ParamVector = std::vector<double>;

} // namespace sharppath

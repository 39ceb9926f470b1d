#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "camels/autograd/tensor.hpp"

namespace camels {

/// One nonnegative finite weight per predicted token position.
struct TokenWeights {
  std::vector<double> values;

  TokenWeights() = default;
  explicit TokenWeights(std::vector<double> v) : values(std::move(v)) { validate(); }
  static TokenWeights constant(std::size_t n, double w) { return TokenWeights(std::vector<double>(n, w)); }

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  Tensor tensor() const { return Tensor::vector(values); }

  void validate() const {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]) || values[i] < 0.0) {
        throw std::invalid_argument("token weight " + std::to_string(i) + " is " +
                                    std::to_string(values[i]) + "; weights must be finite and >= 0");
      }
    }
  }

  bool operator==(const TokenWeights&) const = default;
};

}  // namespace camels

#pragma once

#include <cmath>
#include <cstdint>

#include "big/rng.hpp"
#include "big/tensor.hpp"

namespace big {

// Glorot-uniform weights: U(-b, b), b = gain * sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
                             double gain = 1.0) {
  Rng rng(seed);
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& e : v) e = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace big

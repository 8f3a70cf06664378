#pragma once

#include <cstdint>
#include <vector>

#include "big/checkpoint.hpp"

namespace big {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed, named parameter list. Parameters without a gradient
// buffer are treated as having a zero gradient.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedTensor> params, AdamConfig cfg);

  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  // "adam.m.<name>" and "adam.v.<name>" records for the checkpoint footer.
  std::vector<NamedTensor> moments() const;
  void load_moments(const std::vector<NamedTensor>& moments, std::uint64_t steps);

 private:
  std::vector<NamedTensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace big

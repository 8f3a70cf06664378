#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "big/tensor.hpp"

namespace big {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Optimizer moments and loop position appended after the parameter records.
struct TrainingState {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::vector<NamedTensor> moments;
};

// BIGM container, little-endian:
//   "BIGM" | u32 version | u32 count | count x record
//   [ "BIGT" | u64 epoch | u64 step | u64 seed | u32 count | count x record ]
// record: u32 name_len | name | u32 rank | rank x u64 dims | numel x f64
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::optional<TrainingState> training;

  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into existing tensors by name. A missing name is a
// ParseError, a shape mismatch a ConfigError.
void assign_from_checkpoint(const std::vector<NamedTensor>& targets, const Checkpoint& ckpt);

}  // namespace big

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "big/checkpoint.hpp"
#include "big/ops.hpp"
#include "big/tensor.hpp"

namespace big {

struct ClassifierConfig {
  std::size_t in_channels = 0;
  std::size_t length = 0;
  std::size_t n_classes = 2;
  std::vector<std::size_t> filters{8, 16, 32};
  std::vector<std::size_t> kernels{64, 32, 16};
  std::size_t pool1 = 4;  // after the second conv block
  std::size_t pool2 = 8;  // after the third
  double drop = 0.25;

  void validate() const;
  std::size_t min_length() const { return pool1 * pool2; }
  std::size_t flat_features() const;
};

// conv(8x64)-BN-ReLU, conv(16x32)-BN-ReLU, avgpool(4), dropout,
// conv(32x16)-BN-ReLU, avgpool(8), dropout, dense. Convolutions are stride
// 1 with "same" zero padding.
class Classifier {
 public:
  Classifier() = default;
  Classifier(ClassifierConfig cfg, std::uint64_t seed);

  const ClassifierConfig& config() const { return cfg_; }

  // features [N x in_channels x length] (or unbatched) -> logits [N x n_classes].
  // Train mode uses batch statistics, updates running estimates and draws
  // dropout masks from `seed`.
  Tensor logits(const Tensor& features, bool train, std::uint64_t seed = 0);
  Tensor probabilities(const Tensor& features, bool train, std::uint64_t seed = 0);

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "cls.") const;
  // Running batchnorm statistics, stored next to the parameters.
  std::vector<NamedTensor> buffers(const std::string& prefix = "cls.") const;
  void load_parameters(const Checkpoint& ckpt, const std::string& prefix = "cls.");

  std::vector<Tensor> conv_w, conv_b, bn_gamma, bn_beta;
  std::vector<ops::BatchNormState> bn;
  Tensor dense_w, dense_b;  // [F x n_classes], [n_classes]

 private:
  ClassifierConfig cfg_;
};

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> p);

}  // namespace big

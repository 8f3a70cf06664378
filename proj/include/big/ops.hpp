#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "big/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the active
// tape when any input requires a gradient; with no tape active the ops are
// plain forward kernels.
namespace big::ops {

// Elementwise with trailing-axis broadcasting (extents must match or be 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor cumsum(const Tensor& a, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor index_select(const Tensor& a, std::size_t axis, std::span<const std::size_t> index);

// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Same product for a binary (spike) left operand: zero entries are skipped
// and the work is counted as accumulates rather than multiply-accumulates.
Tensor spike_matmul(const Tensor& a, const Tensor& b);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t groups = 1;
};

// Cross-correlation. input [C_in x L] or [N x C_in x L], kernels
// [C_out x C_in/groups x K], bias [C_out].
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, const Conv1dOptions& opt);
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Adjoint of conv1d. input [C_in x L] or [N x C_in x L], kernels
// [C_in x C_out x K]; output length (L-1)*stride + K - 2*padding.
Tensor conv1d_transposed(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                         std::size_t stride, std::size_t padding = 0);

// Non-overlapping mean pooling over the last axis; the remainder is dropped.
Tensor avgpool1d(const Tensor& input, std::size_t window);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Per-channel normalization of [C x L] or [N x C x L]. Train mode normalizes
// with batch statistics and updates the running estimates.
Tensor batchnorm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   bool train);

// Inverted dropout: survivors scaled by 1/(1-p) in train mode, identity in
// eval mode.
Tensor dropout(const Tensor& input, double p, bool train, std::uint64_t seed);

// Over the last axis.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

Tensor mse_loss(const Tensor& prediction, const Tensor& target);
// logits [K] or [N x K]; mean over rows of -log softmax(logits)[label].
Tensor cross_entropy_with_softmax(const Tensor& logits, std::span<const int> labels);

enum class SpikeForward { Hard, Smooth };

// Threshold unit: forward 1[x >= threshold] (Hard) or sigmoid(slope*(x-threshold))
// (Smooth); backward always uses the sigmoid derivative as the surrogate.
Tensor spike_fn(const Tensor& a, double threshold, double slope, SpikeForward mode = SpikeForward::Hard);

double sigmoid_surrogate(double x, double threshold, double slope);

}  // namespace big::ops

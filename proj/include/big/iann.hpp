#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "big/checkpoint.hpp"
#include "big/encoding.hpp"
#include "big/ops.hpp"
#include "big/tensor.hpp"

namespace big {

struct LifParams {
  double tau = 0.02;  // s
  double u_rest = 0.0;
  double u_th = 1.0;
  double dt = 0.002;  // s

  void validate() const;
};

struct LifState {
  std::vector<double> u;
};

LifState lif_rest_state(std::size_t neurons, const LifParams& p);

// One explicit-Euler step of tau du/dt = -(u - u_rest) + I with
// fire-and-reset. Returns the binary spike vector.
std::vector<std::uint8_t> lif_step(LifState& state, const LifParams& p, std::span<const double> current);

// Attention block on binary [heads x d] tensors:
// SN(column sums of Q (.) K) broadcast (.) V. SN fires where the column sum
// reaches `threshold`. Differentiable through the surrogate.
Tensor spiking_attention(const Tensor& q_s, const Tensor& k_s, const Tensor& v_s, double threshold, double slope,
                         ops::SpikeForward mode = ops::SpikeForward::Hard);

enum class DriveMode {
  Cumulative,     // net(t) = W c(t), c the running spike count
  Instantaneous,  // net(t) = W x(t), the spikes of the current step
};

DriveMode parse_drive_mode(const std::string& name);
std::string to_string(DriveMode m);

struct IannConfig {
  std::size_t channels = 0;
  std::vector<std::size_t> widths;  // empty: 4C, 4C, 2C, 2C, C
  std::size_t heads = 8;
  LifParams lif;
  DriveMode drive = DriveMode::Cumulative;
  double surrogate_slope = 10.0;
  double init_gain = 1.0;       // multiplies the Glorot bound of the drive weights W
  double attention_gain = 1.0;  // same for the Q/K/V projections
  std::size_t readout_window = 8;
  ops::SpikeForward forward_mode = ops::SpikeForward::Hard;

  std::vector<std::size_t> layer_widths() const;
  void validate() const;
};

struct IannLayer {
  Tensor w;   // [fan_in x width]
  Tensor wq;  // [width x width], likewise wk, wv
  Tensor wk;
  Tensor wv;
};

// One hybrid layer over a whole sequence: x [N x T x fan_in] spikes in,
// [N x T x width] spikes out. LIF integration then per-step attention with
// width/heads columns per head. Recorded as a single tape node whose
// backward runs backpropagation through time with the sigmoid surrogate.
Tensor iann_layer_forward(const Tensor& x, const IannLayer& layer, const IannConfig& cfg);

// Causal boxcar of `window` steps over [N x T x n] spikes, sampled at the
// last step of every `stride`-step block: [N x n x T/stride], spikes/step.
Tensor spike_rate_readout(const Tensor& spikes, std::size_t window, std::size_t stride);

// Stacks trains (equal shape) into [N x T x neurons].
Tensor spike_trains_to_tensor(std::span<const SpikeTrain> trains);

class Iann {
 public:
  Iann() = default;
  Iann(IannConfig cfg, std::uint64_t seed);

  const IannConfig& config() const { return cfg_; }
  std::vector<IannLayer>& layers() { return layers_; }
  const std::vector<IannLayer>& layers() const { return layers_; }

  // spikes [N x T x C] -> x~ [N x C x T/steps_per_sample]. When `activity`
  // is non-null it receives each layer's spike output.
  Tensor forward(const Tensor& spikes, std::size_t steps_per_sample, std::vector<Tensor>* activity = nullptr) const;

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "iann.") const;
  void load_parameters(const Checkpoint& ckpt, const std::string& prefix = "iann.");

 private:
  IannConfig cfg_;
  std::vector<IannLayer> layers_;
};

// Single-recording convenience: C x T spike train -> x~ [C x samples].
Tensor iann_forward(const Iann& net, const SpikeTrain& spikes);

}  // namespace big

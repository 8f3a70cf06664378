#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "big/eeg.hpp"

namespace big {

// Binary neurons x timesteps impulse matrix.
struct SpikeTrain {
  std::size_t neurons = 0;
  std::size_t steps = 0;
  double dt = 0.0;  // seconds per step
  std::vector<std::uint8_t> spikes;
  std::size_t steps_per_sample = 1;  // steps spanned by one source sample

  std::uint8_t at(std::size_t n, std::size_t t) const { return spikes[n * steps + t]; }
  std::size_t count(std::size_t n) const;
  std::size_t total() const;
  void validate() const;
};

enum class AmplitudeNorm {
  PerChannelMinMax,  // each channel mapped onto [0, 1] by its own range
  GlobalMinMax,      // one range over all channels
  Magnitude,         // min(1, |x| / reference_amplitude)
};

AmplitudeNorm parse_amplitude_norm(const std::string& name);
std::string to_string(AmplitudeNorm n);

struct PoissonCoderConfig {
  double max_rate = 200.0;  // Hz at unit amplitude
  AmplitudeNorm amplitude_norm = AmplitudeNorm::PerChannelMinMax;
  double reference_amplitude = 1.0;  // Magnitude mode only
  int timesteps_per_sample = 4;
  std::uint64_t seed = 0;

  double dt(double sample_rate) const { return 1.0 / (sample_rate * timesteps_per_sample); }
  void validate(double sample_rate) const;
};

// Normalized amplitudes a_c(t) in [0, 1], channels x samples.
std::vector<double> normalized_amplitude(const EegRecording& rec, const PoissonCoderConfig& cfg);

// Each sample is held for timesteps_per_sample steps; every step fires with
// probability max_rate * a_c(t) * dt. Channel c draws from its own stream
// derive_seed(seed, {c}).
SpikeTrain poisson_encode(const EegRecording& rec, const PoissonCoderConfig& cfg);

// Running impulse count c_j(t) = number of spikes of neuron j at steps <= t.
std::vector<std::uint32_t> impulse_accumulation(const SpikeTrain& train);

// "neuron,timestep" rows, one per spike, ordered by neuron then time.
void write_raster_csv(const std::string& path, const SpikeTrain& train);

}  // namespace big

#include "big/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "big/error.hpp"
#include "big/rng.hpp"

namespace big {

std::size_t SpikeTrain::count(std::size_t n) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < steps; ++t) s += spikes[n * steps + t];
  return s;
}

std::size_t SpikeTrain::total() const {
  std::size_t s = 0;
  for (auto v : spikes) s += v;
  return s;
}

void SpikeTrain::validate() const {
  if (!(dt > 0.0)) throw ContractError("spike train: dt must be positive");
  if (spikes.size() != neurons * steps) throw ContractError("spike train: size mismatch");
  for (auto v : spikes)
    if (v > 1) throw ContractError("spike train: entries must be 0 or 1");
}

AmplitudeNorm parse_amplitude_norm(const std::string& name) {
  if (name == "channel_minmax") return AmplitudeNorm::PerChannelMinMax;
  if (name == "global_minmax") return AmplitudeNorm::GlobalMinMax;
  if (name == "magnitude") return AmplitudeNorm::Magnitude;
  throw ConfigError("unknown amplitude_norm '" + name + "' (expected channel_minmax, global_minmax or magnitude)");
}

std::string to_string(AmplitudeNorm n) {
  switch (n) {
    case AmplitudeNorm::PerChannelMinMax: return "channel_minmax";
    case AmplitudeNorm::GlobalMinMax: return "global_minmax";
    case AmplitudeNorm::Magnitude: return "magnitude";
  }
  return "?";
}

void PoissonCoderConfig::validate(double sample_rate) const {
  if (timesteps_per_sample < 1) throw ConfigError("poisson coder: timesteps_per_sample must be >= 1");
  if (!(max_rate >= 0.0)) throw ConfigError("poisson coder: max_rate must be >= 0");
  if (amplitude_norm == AmplitudeNorm::Magnitude && !(reference_amplitude > 0.0)) {
    throw ConfigError("poisson coder: reference_amplitude must be positive");
  }
  const double p = max_rate * dt(sample_rate);
  if (p > 1.0) {
    throw ConfigError("poisson coder: max_rate * dt = " + std::to_string(p) + " exceeds 1 (max_rate " +
                      std::to_string(max_rate) + " Hz, dt " + std::to_string(dt(sample_rate)) + " s)");
  }
}

std::vector<double> normalized_amplitude(const EegRecording& rec, const PoissonCoderConfig& cfg) {
  std::vector<double> a(rec.data.size(), 0.0);
  auto minmax_map = [&](std::size_t c, double lo, double hi) {
    const double range = hi - lo;
    if (!(range > 0.0)) return;  // flat channel stays silent
    for (std::size_t t = 0; t < rec.samples; ++t) a[c * rec.samples + t] = (rec.at(c, t) - lo) / range;
  };
  switch (cfg.amplitude_norm) {
    case AmplitudeNorm::PerChannelMinMax:
      for (std::size_t c = 0; c < rec.channels; ++c) {
        const auto [lo, hi] = std::minmax_element(rec.row(c), rec.row(c) + rec.samples);
        minmax_map(c, *lo, *hi);
      }
      break;
    case AmplitudeNorm::GlobalMinMax: {
      const auto [lo, hi] = std::minmax_element(rec.data.begin(), rec.data.end());
      for (std::size_t c = 0; c < rec.channels; ++c) minmax_map(c, *lo, *hi);
      break;
    }
    case AmplitudeNorm::Magnitude:
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::min(1.0, std::abs(rec.data[i]) / cfg.reference_amplitude);
      break;
  }
  return a;
}

SpikeTrain poisson_encode(const EegRecording& rec, const PoissonCoderConfig& cfg) {
  rec.validate();
  cfg.validate(rec.sample_rate);
  const std::size_t k = static_cast<std::size_t>(cfg.timesteps_per_sample);
  SpikeTrain out;
  out.neurons = rec.channels;
  out.steps = rec.samples * k;
  out.dt = cfg.dt(rec.sample_rate);
  out.steps_per_sample = k;
  out.spikes.assign(out.neurons * out.steps, 0);
  const auto a = normalized_amplitude(rec, cfg);
  const double scale = cfg.max_rate * out.dt;
  for (std::size_t c = 0; c < rec.channels; ++c) {
    Rng rng(derive_seed(cfg.seed, {c}));
    std::uint8_t* row = out.spikes.data() + c * out.steps;
    for (std::size_t t = 0; t < rec.samples; ++t) {
      const double p = scale * a[c * rec.samples + t];
      // One draw per step regardless of p keeps streams aligned across inputs.
      for (std::size_t j = 0; j < k; ++j) row[t * k + j] = rng.uniform() < p ? 1 : 0;
    }
  }
  return out;
}

std::vector<std::uint32_t> impulse_accumulation(const SpikeTrain& train) {
  std::vector<std::uint32_t> c(train.spikes.size());
  for (std::size_t n = 0; n < train.neurons; ++n) {
    std::uint32_t acc = 0;
    for (std::size_t t = 0; t < train.steps; ++t) {
      acc += train.spikes[n * train.steps + t];
      c[n * train.steps + t] = acc;
    }
  }
  return c;
}

void write_raster_csv(const std::string& path, const SpikeTrain& train) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "neuron,timestep\n";
  for (std::size_t n = 0; n < train.neurons; ++n)
    for (std::size_t t = 0; t < train.steps; ++t)
      if (train.at(n, t)) out << n << ',' << t << '\n';
}

}  // namespace big

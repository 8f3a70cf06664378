#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace big {

// Multichannel recording, row-major channels x samples, microvolts.
struct EegRecording {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate = 0.0;
  std::vector<double> data;
  std::vector<std::string> channel_labels;
  std::optional<int> label;
  std::optional<std::string> subject_id;

  double at(std::size_t c, std::size_t t) const { return data[c * samples + t]; }
  double& at(std::size_t c, std::size_t t) { return data[c * samples + t]; }
  const double* row(std::size_t c) const { return data.data() + c * samples; }
  double* row(std::size_t c) { return data.data() + c * samples; }
  double duration() const { return static_cast<double>(samples) / sample_rate; }

  // Throws ContractError on any broken invariant.
  void validate() const;
};

EegRecording make_recording(std::size_t channels, std::size_t samples, double sample_rate,
                            std::vector<double> data = {});
std::vector<std::string> default_channel_labels(std::size_t channels);

struct BandSpec {
  std::string name;
  double low_hz = 0.0;
  double high_hz = 0.0;
};

// delta 0.5-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-50 Hz.
const std::vector<BandSpec>& standard_bands();
BandSpec band_by_name(const std::string& name);

// BIGE container, little-endian:
//   "BIGE" | u32 version | u32 channels | u64 samples | f64 sample_rate | i32 label (-1 none)
//   | channels x (u32 len | bytes) channel labels | u32 len | bytes subject id (empty = none)
//   | channels*samples f64, row-major
inline constexpr std::uint32_t kRecordingVersion = 1;

void save_recording(const std::string& path, const EegRecording& rec);
EegRecording load_recording(const std::string& path);

// Header row = channel labels, then one row per sample, one column per channel.
EegRecording load_csv_recording(const std::string& path, double sample_rate);
void save_csv_recording(const std::string& path, const EegRecording& rec);

// Zero-phase brick-wall filter: every DFT bin outside [low_hz, high_hz] is
// zeroed. Throws ConfigError if the band reaches past Nyquist.
EegRecording bandpass_filter(const EegRecording& rec, const BandSpec& band);

// Synthetic class descriptor. Each band contributes `sinusoids_per_band`
// sinusoids at random frequencies inside the band with total RMS equal to
// `amplitude`; tones are fixed-frequency components; the noise is 1/f
// shaped with the given RMS.
struct SynthBand {
  BandSpec band;
  double amplitude = 0.0;
};

struct SynthTone {
  double freq_hz = 0.0;
  double amplitude = 0.0;
};

struct SynthClassSpec {
  std::string name;
  int label = 0;
  std::vector<SynthBand> bands;
  std::vector<SynthTone> tones;
  double noise_rms = 0.0;
  int sinusoids_per_band = 3;
  double channel_jitter = 0.25;  // relative per-channel amplitude spread
};

SynthClassSpec synth_alpha_dominant(int label = 0);
SynthClassSpec synth_beta_dominant(int label = 1);
// "alpha" / "beta"; throws ConfigError otherwise.
SynthClassSpec synth_preset(const std::string& name, int label);

EegRecording synthesize_eeg(const SynthClassSpec& spec, std::size_t channels, double seconds, double sample_rate,
                            std::uint64_t seed);

}  // namespace big

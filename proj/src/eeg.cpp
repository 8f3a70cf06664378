#include "big/eeg.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "big/binary_io.hpp"
#include "big/dsp.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"

namespace big {

void EegRecording::validate() const {
  if (channels == 0 || samples == 0) throw ContractError("recording: channels and samples must be positive");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw ContractError("recording: sample_rate must be positive");
  if (data.size() != channels * samples) throw ContractError("recording: data size does not match channels x samples");
  if (channel_labels.size() != channels) throw ContractError("recording: need one label per channel");
  std::set<std::string> seen;
  for (const auto& l : channel_labels)
    if (!seen.insert(l).second) throw ContractError("recording: duplicate channel label '" + l + "'");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ContractError("recording: non-finite sample at channel " + std::to_string(i / samples) + ", index " +
                          std::to_string(i % samples));
    }
  }
}

std::vector<std::string> default_channel_labels(std::size_t channels) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < channels; ++c) out.push_back("Ch" + std::to_string(c + 1));
  return out;
}

EegRecording make_recording(std::size_t channels, std::size_t samples, double sample_rate, std::vector<double> data) {
  EegRecording r;
  r.channels = channels;
  r.samples = samples;
  r.sample_rate = sample_rate;
  r.data = data.empty() ? std::vector<double>(channels * samples, 0.0) : std::move(data);
  r.channel_labels = default_channel_labels(channels);
  r.validate();
  return r;
}

const std::vector<BandSpec>& standard_bands() {
  static const std::vector<BandSpec> bands{
      {"delta", 0.5, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}, {"gamma", 30.0, 50.0}};
  return bands;
}

BandSpec band_by_name(const std::string& name) {
  for (const auto& b : standard_bands())
    if (b.name == name) return b;
  throw ConfigError("unknown band '" + name + "' (expected delta, theta, alpha, beta or gamma)");
}

// ---- BIGE -------------------------------------------------------------------

void save_recording(const std::string& path, const EegRecording& rec) {
  rec.validate();
  std::ostringstream os(std::ios::binary);
  os.write("BIGE", 4);
  binio::put_u32(os, kRecordingVersion);
  binio::put_u32(os, static_cast<std::uint32_t>(rec.channels));
  binio::put_u64(os, rec.samples);
  binio::put_f64(os, rec.sample_rate);
  binio::put_i32(os, rec.label ? *rec.label : -1);
  for (const auto& l : rec.channel_labels) binio::put_string(os, l);
  binio::put_string(os, rec.subject_id.value_or(""));
  for (double v : rec.data) binio::put_f64(os, v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write recording " + path);
  const std::string bytes = os.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to recording " + path);
}

EegRecording load_recording(const std::string& path) {
  const auto bytes = binio::read_file(path);
  const std::string what = "recording " + path;
  binio::Reader rd(bytes, what);
  if (bytes.size() < 4 || rd.bytes(4) != "BIGE") throw ParseError(what + ": bad magic");
  const std::uint32_t version = rd.u32();
  if (version != kRecordingVersion) throw ParseError(what + ": unsupported version " + std::to_string(version));
  EegRecording r;
  r.channels = rd.u32();
  r.samples = rd.u64();
  r.sample_rate = rd.f64();
  const std::int32_t label = rd.i32();
  if (label >= 0) r.label = label;
  if (r.channels == 0 || r.samples == 0) throw ParseError(what + ": zero channels or samples");
  for (std::size_t c = 0; c < r.channels; ++c) r.channel_labels.push_back(rd.string());
  std::string subject = rd.string();
  if (!subject.empty()) r.subject_id = std::move(subject);
  if (rd.remaining() / 8 / r.channels < r.samples) rd.need(r.channels * r.samples * 8);
  r.data.resize(r.channels * r.samples);
  for (auto& v : r.data) v = rd.f64();
  if (!rd.at_end()) throw ParseError(what + ": unexpected trailing data");
  try {
    r.validate();
  } catch (const ContractError& e) {
    throw ParseError(what + ": " + e.what());
  }
  return r;
}

// ---- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

EegRecording load_csv_recording(const std::string& path, double sample_rate) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty CSV");
  EegRecording r;
  r.channel_labels = split_csv_line(line);
  r.channels = r.channel_labels.size();
  r.sample_rate = sample_rate;
  std::vector<std::vector<double>> cols(r.channels);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != r.channels) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(r.channels) +
                       " columns, got " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < r.channels; ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || cells[c].empty()) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": not a number: '" + cells[c] + "'");
      }
      cols[c].push_back(v);
    }
  }
  r.samples = r.channels ? cols[0].size() : 0;
  r.data.reserve(r.channels * r.samples);
  for (auto& col : cols) r.data.insert(r.data.end(), col.begin(), col.end());
  try {
    r.validate();
  } catch (const ContractError& e) {
    throw ParseError(path + ": " + e.what());
  }
  return r;
}

void save_csv_recording(const std::string& path, const EegRecording& rec) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t c = 0; c < rec.channels; ++c) out << (c ? "," : "") << rec.channel_labels[c];
  out << '\n';
  out.precision(17);
  for (std::size_t t = 0; t < rec.samples; ++t) {
    for (std::size_t c = 0; c < rec.channels; ++c) out << (c ? "," : "") << rec.at(c, t);
    out << '\n';
  }
}

// ---- filtering --------------------------------------------------------------

EegRecording bandpass_filter(const EegRecording& rec, const BandSpec& band) {
  if (!(band.low_hz >= 0.0) || !(band.high_hz > band.low_hz)) {
    throw ConfigError("band '" + band.name + "': need 0 <= low_hz < high_hz");
  }
  if (band.high_hz > rec.sample_rate / 2.0) {
    throw ConfigError("band '" + band.name + "' upper edge " + std::to_string(band.high_hz) +
                      " Hz exceeds Nyquist " + std::to_string(rec.sample_rate / 2.0) + " Hz");
  }
  EegRecording out = rec;
  for (std::size_t c = 0; c < rec.channels; ++c) {
    const auto y = dsp::brickwall(std::span<const double>(rec.row(c), rec.samples), rec.sample_rate, band.low_hz,
                                  band.high_hz);
    std::copy(y.begin(), y.end(), out.row(c));
  }
  return out;
}

// ---- synthesis --------------------------------------------------------------

SynthClassSpec synth_alpha_dominant(int label) {
  SynthClassSpec s;
  s.name = "alpha";
  s.label = label;
  s.bands = {{band_by_name("theta"), 3.0}, {band_by_name("alpha"), 12.0}, {band_by_name("beta"), 4.0}};
  s.noise_rms = 3.0;
  return s;
}

SynthClassSpec synth_beta_dominant(int label) {
  SynthClassSpec s;
  s.name = "beta";
  s.label = label;
  s.bands = {{band_by_name("theta"), 3.0}, {band_by_name("alpha"), 4.0}, {band_by_name("beta"), 12.0}};
  s.noise_rms = 3.0;
  return s;
}

SynthClassSpec synth_preset(const std::string& name, int label) {
  if (name == "alpha") return synth_alpha_dominant(label);
  if (name == "beta") return synth_beta_dominant(label);
  throw ConfigError("unknown synthetic class '" + name + "' (expected alpha or beta)");
}

namespace {

// Gaussian noise with a 1/f power spectrum, scaled to the requested RMS.
std::vector<double> pink_noise(Rng& rng, std::size_t n, double rms) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.normal();
  if (n < 2) return std::vector<double>(n, 0.0);
  auto spec = dsp::rfft(w);
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) spec[k] /= std::sqrt(static_cast<double>(k));
  auto x = dsp::irfft(spec, n);
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(n);
  const double g = ms > 0.0 ? rms / std::sqrt(ms) : 0.0;
  for (auto& v : x) v *= g;
  return x;
}

}  // namespace

EegRecording synthesize_eeg(const SynthClassSpec& spec, std::size_t channels, double seconds, double sample_rate,
                            std::uint64_t seed) {
  if (channels == 0) throw ConfigError("synthesize_eeg: channels must be positive");
  if (!(sample_rate > 0.0)) throw ConfigError("synthesize_eeg: sample_rate must be positive");
  const double ns = std::round(seconds * sample_rate);
  if (!(ns >= 1.0)) throw ConfigError("synthesize_eeg: duration gives no samples");
  if (spec.sinusoids_per_band < 1) throw ConfigError("synthesize_eeg: sinusoids_per_band must be >= 1");
  for (const auto& b : spec.bands) {
    if (b.band.high_hz > sample_rate / 2.0) {
      throw ConfigError("synthesize_eeg: band '" + b.band.name + "' exceeds Nyquist");
    }
  }
  EegRecording r = make_recording(channels, static_cast<std::size_t>(ns), sample_rate);
  r.label = spec.label;
  const double two_pi = 2.0 * std::numbers::pi;

  // Band sources are shared across channels (same frequencies), each channel
  // seeing them with its own gain and phase lag.
  struct Source {
    double freq, phase;
  };
  std::vector<std::vector<Source>> sources(spec.bands.size());
  for (std::size_t b = 0; b < spec.bands.size(); ++b) {
    Rng rng(derive_seed(seed, {0, b}));
    const auto& band = spec.bands[b].band;
    for (int k = 0; k < spec.sinusoids_per_band; ++k) {
      const double f = rng.uniform(band.low_hz, band.high_hz);
      sources[b].push_back({f, rng.uniform(0.0, two_pi)});
    }
  }

  for (std::size_t c = 0; c < channels; ++c) {
    Rng rng(derive_seed(seed, {1, c}));
    double* x = r.row(c);
    for (std::size_t b = 0; b < spec.bands.size(); ++b) {
      const double gain = 1.0 + spec.channel_jitter * rng.uniform(-1.0, 1.0);
      // Each sinusoid has RMS amp/sqrt(n), so the band total has RMS amp.
      const double a = spec.bands[b].amplitude * gain * std::sqrt(2.0 / spec.sinusoids_per_band);
      for (const auto& s : sources[b]) {
        const double lag = rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
        for (std::size_t t = 0; t < r.samples; ++t) {
          x[t] += a * std::sin(two_pi * s.freq * static_cast<double>(t) / sample_rate + s.phase + lag);
        }
      }
    }
    for (const auto& tone : spec.tones) {
      for (std::size_t t = 0; t < r.samples; ++t) {
        x[t] += tone.amplitude * std::sin(two_pi * tone.freq_hz * static_cast<double>(t) / sample_rate);
      }
    }
    if (spec.noise_rms > 0.0) {
      const auto n = pink_noise(rng, r.samples, spec.noise_rms);
      for (std::size_t t = 0; t < r.samples; ++t) x[t] += n[t];
    }
  }
  return r;
}

}  // namespace big

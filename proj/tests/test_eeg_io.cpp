#include <gtest/gtest.h>

#include <array>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "big/binary_io.hpp"
#include "big/eeg.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"
#include "spectral_oracle.hpp"

using namespace big;
namespace fs = std::filesystem;

namespace {

std::string tmp(const std::string& name) { return (fs::temp_directory_path() / ("big_eeg_" + name)).string(); }

EegRecording sinusoid(double freq, double amp, std::size_t channels, double seconds, double rate) {
  EegRecording r = make_recording(channels, static_cast<std::size_t>(seconds * rate), rate);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < r.samples; ++t)
      r.at(c, t) = amp * std::sin(2.0 * std::numbers::pi * freq * t / rate + 0.3 * c);
  return r;
}

double rms(const EegRecording& r, std::size_t c, std::size_t from = 0, std::size_t to = 0) {
  if (to == 0) to = r.samples;
  double s = 0;
  for (std::size_t t = from; t < to; ++t) s += r.at(c, t) * r.at(c, t);
  return std::sqrt(s / static_cast<double>(to - from));
}

EegRecording random_recording(Rng& rng, std::size_t ch, std::size_t n, double rate) {
  EegRecording r = make_recording(ch, n, rate);
  for (auto& v : r.data) v = rng.normal() * 10.0;
  return r;
}

}  // namespace

TEST(RecordingFormat, SaveLoadRoundTripIsBitExact) {
  Rng rng(1);
  EegRecording r = random_recording(rng, 4, 256, 250.0);
  r.label = 1;
  r.subject_id = "sub-07";
  r.channel_labels = {"Fz", "Cz", "Pz", "Oz"};
  const auto p = tmp("rt.bige");
  save_recording(p, r);
  EegRecording q = load_recording(p);
  EXPECT_EQ(q.channels, 4u);
  EXPECT_EQ(q.samples, 256u);
  EXPECT_EQ(q.sample_rate, 250.0);
  EXPECT_EQ(q.label, std::optional<int>(1));
  EXPECT_EQ(q.subject_id, std::optional<std::string>("sub-07"));
  EXPECT_EQ(q.channel_labels, r.channel_labels);
  for (std::size_t i = 0; i < r.data.size(); ++i)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(q.data[i]), std::bit_cast<std::uint64_t>(r.data[i]));
  fs::remove(p);
}

TEST(RecordingFormat, UnlabelledRecordingHasNoLabel) {
  const auto p = tmp("nolabel.bige");
  save_recording(p, make_recording(1, 3, 100.0, {1, 2, 3}));
  EegRecording q = load_recording(p);
  EXPECT_FALSE(q.label.has_value());
  EXPECT_FALSE(q.subject_id.has_value());
  fs::remove(p);
}

TEST(RecordingFormat, FixtureWrittenByIndependentWriterLoads) {
  const std::string path = std::string(BIG_FIXTURE_DIR) + "/small.bige";
  EXPECT_EQ(binio::file_hash(path), "c1e15ea17592d49f");
  EegRecording r = load_recording(path);
  EXPECT_EQ(r.channels, 3u);
  EXPECT_EQ(r.samples, 16u);
  EXPECT_EQ(r.sample_rate, 128.0);
  EXPECT_EQ(r.label, std::optional<int>(1));
  EXPECT_EQ(r.channel_labels, (std::vector<std::string>{"Fp1", "Cz", "O2"}));
  EXPECT_EQ(r.subject_id, std::optional<std::string>("S001"));
  EXPECT_EQ(r.at(0, 0), -1.5);
  EXPECT_DOUBLE_EQ(r.at(1, 3), 2.0 * std::sin(2.0 * std::numbers::pi * 24.0 / 128.0) + 0.75 - 1.5);
}

TEST(RecordingFormat, MalformedInputsGiveDistinctParseErrors) {
  auto message = [](const std::string& p) {
    try {
      load_recording(p);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const auto empty = tmp("empty.bige");
  std::ofstream(empty).close();
  EXPECT_NE(message(empty).find("magic"), std::string::npos);

  auto bytes = binio::read_file(std::string(BIG_FIXTURE_DIR) + "/small.bige");
  const auto trunc = tmp("trunc.bige");
  std::ofstream(trunc, std::ios::binary).write(bytes.data(), 100);
  EXPECT_NE(message(trunc).find("truncated"), std::string::npos);

  bytes[4] = 2;
  const auto ver = tmp("ver.bige");
  std::ofstream(ver, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_NE(message(ver).find("version"), std::string::npos);

  bytes[0] = 'X';
  const auto magic = tmp("magic.bige");
  std::ofstream(magic, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_NE(message(magic).find("magic"), std::string::npos);
  for (const auto& p : {empty, trunc, ver, magic}) fs::remove(p);
}

TEST(RecordingFormat, InvariantsRejectBadRecordings) {
  EegRecording r = make_recording(2, 4, 100.0);
  r.channel_labels = {"A", "A"};
  EXPECT_THROW(r.validate(), ContractError);
  r.channel_labels = {"A", "B"};
  r.data[3] = std::nan("");
  EXPECT_THROW(r.validate(), ContractError);
  EXPECT_THROW(make_recording(0, 4, 100.0), ContractError);
  EXPECT_THROW(make_recording(1, 4, 0.0), ContractError);
}

TEST(CsvImport, HeaderGivesLabelsAndColumnsGiveChannels) {
  EegRecording r = load_csv_recording(std::string(BIG_FIXTURE_DIR) + "/small.csv", 200.0);
  EXPECT_EQ(r.channel_labels, (std::vector<std::string>{"Fp1", "Cz", "O2"}));
  EXPECT_EQ(r.samples, 2u);
  EXPECT_EQ(r.at(0, 0), 1.5);
  EXPECT_EQ(r.at(1, 0), -2.0);
  EXPECT_EQ(r.at(2, 0), 0.3);
  EXPECT_EQ(r.at(1, 1), 4.25);
  EXPECT_EQ(r.at(2, 1), -7.0);
}

TEST(CsvImport, RaggedOrNonNumericRowsAreParseErrors) {
  const auto p = tmp("bad.csv");
  std::ofstream(p) << "a,b\n1,2\n3\n";
  EXPECT_THROW(load_csv_recording(p, 100.0), ParseError);
  std::ofstream(p) << "a,b\n1,x\n";
  EXPECT_THROW(load_csv_recording(p, 100.0), ParseError);
  std::ofstream(p) << "a,b\n";
  EXPECT_THROW(load_csv_recording(p, 100.0), ParseError);
  fs::remove(p);
}

TEST(CsvImport, ExportImportRoundTrip) {
  Rng rng(2);
  EegRecording r = random_recording(rng, 3, 50, 128.0);
  const auto p = tmp("rt.csv");
  save_csv_recording(p, r);
  EegRecording q = load_csv_recording(p, 128.0);
  for (std::size_t i = 0; i < r.data.size(); ++i) ASSERT_EQ(q.data[i], r.data[i]);
  fs::remove(p);
}

TEST(Bandpass, AlphaPassesTenHertzWithinOnePercent) {
  EegRecording x = sinusoid(10.0, 20.0, 2, 4.0, 256.0);
  EegRecording y = bandpass_filter(x, band_by_name("alpha"));
  for (std::size_t c = 0; c < 2; ++c) {
    const double ratio = rms(y, c, 128, 896) / rms(x, c, 128, 896);
    EXPECT_NEAR(ratio, 1.0, 0.01);
  }
}

TEST(Bandpass, DeltaRejectsTenHertzByFortyDecibels) {
  // Non-integer number of cycles, so the sinusoid leaks across bins.
  EegRecording x = sinusoid(10.0, 20.0, 2, 3.3, 256.0);
  EegRecording y = bandpass_filter(x, band_by_name("delta"));
  for (std::size_t c = 0; c < 2; ++c) EXPECT_LE(20.0 * std::log10(rms(y, c) / rms(x, c)), -40.0);
}

TEST(Bandpass, DcIsRemovedByAnyBandAboveZero) {
  EegRecording x = make_recording(1, 300, 128.0, std::vector<double>(300, 7.5));
  for (const auto& b : standard_bands()) {
    EegRecording y = bandpass_filter(x, b);
    EXPECT_LT(rms(y, 0), 1e-12) << b.name;
  }
}

TEST(Bandpass, BandAboveNyquistIsConfigError) {
  EegRecording x = make_recording(1, 64, 64.0);
  EXPECT_THROW(bandpass_filter(x, band_by_name("gamma")), ConfigError);
  EXPECT_THROW(bandpass_filter(x, BandSpec{"bad", 5.0, 4.0}), ConfigError);
}

TEST(Bandpass, IdempotentAndLinear) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 100 + rng.below(300);
    EegRecording a = random_recording(rng, 3, n, 128.0);
    EegRecording b = random_recording(rng, 3, n, 128.0);
    const BandSpec band = standard_bands()[rng.below(5)];
    EegRecording once = bandpass_filter(a, band);
    EegRecording twice = bandpass_filter(once, band);
    for (std::size_t i = 0; i < once.data.size(); ++i) ASSERT_NEAR(twice.data[i], once.data[i], 1e-9);

    const double alpha = rng.uniform(-3, 3), beta = rng.uniform(-3, 3);
    EegRecording mix = a;
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = alpha * a.data[i] + beta * b.data[i];
    EegRecording fm = bandpass_filter(mix, band);
    EegRecording fb = bandpass_filter(b, band);
    for (std::size_t i = 0; i < fm.data.size(); ++i)
      ASSERT_NEAR(fm.data[i], alpha * once.data[i] + beta * fb.data[i], 1e-9);
  }
}

TEST(Synthesis, SameSeedIsBitIdentical) {
  auto a = synthesize_eeg(synth_alpha_dominant(), 8, 2.0, 128.0, 99);
  auto b = synthesize_eeg(synth_alpha_dominant(), 8, 2.0, 128.0, 99);
  auto c = synthesize_eeg(synth_alpha_dominant(), 8, 2.0, 128.0, 100);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  EXPECT_EQ(a.label, std::optional<int>(0));
  a.validate();
}

TEST(Synthesis, AlphaDominantClassHasMoreAlphaPower) {
  const BandSpec alpha = band_by_name("alpha");
  double pa = 0, pb = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto a = synthesize_eeg(synth_alpha_dominant(), 2, 2.0, 128.0, s);
    auto b = synthesize_eeg(synth_beta_dominant(), 2, 2.0, 128.0, s + 1000);
    pa += big::testing::naive_band_power({a.row(0), a.samples}, 128.0, alpha.low_hz, alpha.high_hz);
    pb += big::testing::naive_band_power({b.row(0), b.samples}, 128.0, alpha.low_hz, alpha.high_hz);
  }
  EXPECT_GT(pa / 100.0, pb / 100.0);
}

TEST(Synthesis, SingleToneWithoutNoisePeaksAtItsFrequency) {
  SynthClassSpec s;
  s.tones = {{10.0, 5.0}};
  auto r = synthesize_eeg(s, 1, 8.0, 128.0, 4);
  const auto psd = big::testing::welch_psd({r.row(0), r.samples}, 128);
  std::size_t peak = 0;
  for (std::size_t k = 1; k < psd.size(); ++k)
    if (psd[k] > psd[peak]) peak = k;
  EXPECT_EQ(peak, 10u);  // 128-point segments at 128 Hz: 1 Hz bins
}

TEST(Synthesis, TwoClassesAreLinearlySeparableOnBandPower) {
  // Fisher discriminant on (log alpha, log beta) power; fit on one draw,
  // evaluate on a fresh one.
  const BandSpec alpha = band_by_name("alpha"), beta = band_by_name("beta");
  auto features = [&](const EegRecording& r) {
    double a = 0, b = 0;
    for (std::size_t c = 0; c < r.channels; ++c) {
      a += big::testing::naive_band_power({r.row(c), r.samples}, r.sample_rate, alpha.low_hz, alpha.high_hz);
      b += big::testing::naive_band_power({r.row(c), r.samples}, r.sample_rate, beta.low_hz, beta.high_hz);
    }
    return std::array<double, 2>{std::log(a), std::log(b)};
  };
  auto draw = [&](std::uint64_t base) {
    std::vector<std::pair<std::array<double, 2>, int>> out;
    for (std::uint64_t i = 0; i < 100; ++i) {
      out.push_back({features(synthesize_eeg(synth_alpha_dominant(0), 4, 2.0, 128.0, base + i)), 0});
      out.push_back({features(synthesize_eeg(synth_beta_dominant(1), 4, 2.0, 128.0, base + 500 + i)), 1});
    }
    return out;
  };
  const auto train = draw(0), test = draw(10000);
  std::array<double, 2> m0{}, m1{};
  for (const auto& [f, y] : train)
    for (int d = 0; d < 2; ++d) (y ? m1 : m0)[d] += f[d] / 100.0;
  double s00 = 0, s01 = 0, s11 = 0;
  for (const auto& [f, y] : train) {
    const auto& m = y ? m1 : m0;
    s00 += (f[0] - m[0]) * (f[0] - m[0]);
    s01 += (f[0] - m[0]) * (f[1] - m[1]);
    s11 += (f[1] - m[1]) * (f[1] - m[1]);
  }
  const double det = s00 * s11 - s01 * s01;
  const double dx = m1[0] - m0[0], dy = m1[1] - m0[1];
  const double w0 = (s11 * dx - s01 * dy) / det, w1 = (-s01 * dx + s00 * dy) / det;
  const double bias = -(w0 * (m0[0] + m1[0]) + w1 * (m0[1] + m1[1])) / 2.0;
  int correct = 0;
  for (const auto& [f, y] : test) correct += ((w0 * f[0] + w1 * f[1] + bias > 0) ? 1 : 0) == y;
  EXPECT_GE(correct / 200.0, 0.95);
}

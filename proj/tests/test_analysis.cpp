#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "big/analysis.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"

using namespace big;

namespace {

const double kPi = std::acos(-1.0);

EegRecording noise(std::size_t channels, std::size_t samples, double fs, std::uint64_t seed) {
  EegRecording r = make_recording(channels, samples, fs);
  Rng rng(seed);
  for (auto& v : r.data) v = rng.normal();
  return r;
}

SpikeTrain train_from(std::size_t neurons, std::size_t steps, double dt, const std::vector<std::uint8_t>& s) {
  SpikeTrain t;
  t.neurons = neurons;
  t.steps = steps;
  t.dt = dt;
  t.spikes = s;
  return t;
}

// Test-only PLV: brick-wall band and Hilbert transform by a direct O(n^2)
// DFT, no FFT library involved.
double naive_plv(const std::vector<double>& a, const std::vector<double>& b, double fs, double lo, double hi) {
  const std::size_t n = a.size();
  auto analytic = [&](const std::vector<double>& x) {
    std::vector<std::complex<double>> X(n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t t = 0; t < n; ++t) X[k] += x[t] * std::polar(1.0, -2.0 * kPi * double(k * t % n) / double(n));
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t kk = k <= n / 2 ? k : n - k;
      const double f = double(kk) * fs / double(n);
      const bool keep = f >= lo && f <= hi;
      if (!keep || k > n / 2) {
        X[k] = 0.0;
      } else if (k != 0 && !(n % 2 == 0 && k == n / 2)) {
        X[k] *= 2.0;
      }
    }
    std::vector<std::complex<double>> z(n);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < n; ++k) z[t] += X[k] * std::polar(1.0, 2.0 * kPi * double(k * t % n) / double(n));
      z[t] /= double(n);
    }
    return z;
  };
  const auto za = analytic(a), zb = analytic(b);
  std::complex<double> s;
  for (std::size_t t = 0; t < n; ++t) s += (za[t] / std::abs(za[t])) * std::conj(zb[t] / std::abs(zb[t]));
  return std::abs(s) / double(n);
}

// Test-only AUC: fraction of (positive, negative) pairs ordered correctly,
// ties counted half.
double mann_whitney_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / double(pairs);
}

void expect_plv_invariants(const PlvMatrix& m) {
  EXPECT_NO_THROW(m.validate());
  for (std::size_t a = 0; a < m.channels; ++a) {
    EXPECT_NEAR(m.at(a, a), 1.0, 1e-12);
    for (std::size_t b = 0; b < m.channels; ++b) {
      EXPECT_NEAR(m.at(a, b), m.at(b, a), 1e-12);
      EXPECT_GE(m.at(a, b), 0.0);
      EXPECT_LE(m.at(a, b), 1.0);
    }
  }
}

}  // namespace

// ---- firing rates -------------------------------------------------------------

TEST(FiringRates, SilentTrain) {
  const auto r = firing_rates(train_from(3, 100, 1e-3, std::vector<std::uint8_t>(300, 0)));
  for (double v : r.neuron_rates) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(r.raster.empty());
}

TEST(FiringRates, SaturatedNeuronFiresAtStepRate) {
  const auto r = firing_rates(train_from(1, 500, 1e-3, std::vector<std::uint8_t>(500, 1)));
  EXPECT_NEAR(r.neuron_rates[0], 1000.0, 1e-9);
  EXPECT_EQ(r.raster.size(), 500u);
}

TEST(FiringRates, PoissonRateWithinThreeSigma) {
  EegRecording rec = make_recording(8, 20 * 250, 250.0);
  std::fill(rec.data.begin(), rec.data.end(), 1.0);
  PoissonCoderConfig cfg{50.0, AmplitudeNorm::Magnitude, 1.0, 4, 17};
  const auto r = firing_rates(poisson_encode(rec, cfg));
  EXPECT_NEAR(r.duration, 20.0, 1e-9);
  const double band = 3.0 * std::sqrt(50.0 / 20.0);
  for (double v : r.channel_rates) EXPECT_NEAR(v, 50.0, band);
}

TEST(FiringRates, ConcatenationIsDurationWeightedAverage) {
  Rng rng(4);
  const std::size_t n = 3, s1 = 70, s2 = 130;
  std::vector<std::uint8_t> a(n * s1), b(n * s2), ab(n * (s1 + s2));
  for (auto& v : a) v = rng.uniform(0, 1) < 0.2;
  for (auto& v : b) v = rng.uniform(0, 1) < 0.6;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&a[i * s1], s1, &ab[i * (s1 + s2)]);
    std::copy_n(&b[i * s2], s2, &ab[i * (s1 + s2) + s1]);
  }
  const double dt = 1.0 / 512.0;  // power of two keeps durations exact
  const auto ra = firing_rates(train_from(n, s1, dt, a));
  const auto rb = firing_rates(train_from(n, s2, dt, b));
  const auto rab = firing_rates(train_from(n, s1 + s2, dt, ab));
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (ra.neuron_rates[i] * ra.duration + rb.neuron_rates[i] * rb.duration) / (ra.duration + rb.duration);
    EXPECT_DOUBLE_EQ(rab.neuron_rates[i], w);
  }
}

TEST(FiringRates, ChannelGrouping) {
  std::vector<std::uint8_t> s(4 * 10, 0);
  for (std::size_t t = 0; t < 10; ++t) s[0 * 10 + t] = 1;  // neuron 0 saturated
  const auto r = firing_rates(train_from(4, 10, 0.01, s), 2);
  ASSERT_EQ(r.channel_rates.size(), 2u);
  EXPECT_NEAR(r.channel_rates[0], 50.0, 1e-12);
  EXPECT_EQ(r.channel_rates[1], 0.0);
  EXPECT_THROW(firing_rates(train_from(4, 10, 0.01, s), 3), ConfigError);
}

// ---- PLV --------------------------------------------------------------------

TEST(Plv, IdenticalChannelsLockPerfectly) {
  EegRecording r = noise(2, 2048, 128.0, 1);
  std::copy_n(r.row(0), r.samples, r.row(1));
  const auto m = plv_matrix(r, band_by_name("alpha"));
  EXPECT_NEAR(m.at(0, 1), 1.0, 1e-9);
  expect_plv_invariants(m);
}

TEST(Plv, ConstantPhaseOffsetLocksPerfectly) {
  const double fs = 128.0, f = 10.0;  // exactly on an FFT bin of 1280 samples
  EegRecording r = make_recording(2, 1280, fs);
  for (std::size_t t = 0; t < r.samples; ++t) {
    r.at(0, t) = std::sin(2 * kPi * f * double(t) / fs);
    r.at(1, t) = 3.0 * std::sin(2 * kPi * f * double(t) / fs - kPi / 4);
  }
  const auto m = plv_matrix(r, band_by_name("alpha"));
  EXPECT_NEAR(m.at(0, 1), 1.0, 1e-6);
  expect_plv_invariants(m);
}

TEST(Plv, IndependentNoiseNullDistribution) {
  // Beta band at 64 Hz keeps about 2.6k independent phase samples in 10^4
  // points, so P(PLV > 0.05) ~ exp(-0.0025 * 2600) ~ 1e-3 per draw.
  const BandSpec beta = band_by_name("beta");
  std::size_t ok = 0;
  const std::size_t seeds = 200;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto m = plv_matrix(noise(2, 10000, 64.0, 1000 + s), beta);
    ok += m.at(0, 1) < 0.05;
  }
  EXPECT_GE(double(ok) / double(seeds), 0.99);
}

TEST(Plv, MatchesDirectDftOracle) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const EegRecording r = noise(3, 256, 128.0, seed);
    const auto m = plv_matrix(r, band_by_name("alpha"));
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b) {
        const std::vector<double> xa(r.row(a), r.row(a) + r.samples), xb(r.row(b), r.row(b) + r.samples);
        EXPECT_NEAR(m.at(a, b), naive_plv(xa, xb, 128.0, 8.0, 13.0), 1e-9);
      }
  }
}

TEST(Plv, InvariantsAndAmplitudeScaling) {
  Rng rng(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t ch = 2 + seed % 5;
    EegRecording r = noise(ch, 512, 128.0, 50 + seed);
    const auto m = plv_matrix(r, band_by_name(seed % 2 ? "alpha" : "theta"));
    expect_plv_invariants(m);
    for (std::size_t c = 0; c < ch; ++c) {
      const double k = rng.uniform(0.01, 100.0);
      for (std::size_t t = 0; t < r.samples; ++t) r.at(c, t) *= k;
    }
    const auto s = plv_matrix(r, m.band);
    for (std::size_t i = 0; i < m.values.size(); ++i) EXPECT_NEAR(s.values[i], m.values[i], 1e-9);
  }
}

TEST(Plv, ErrorsAndWindows) {
  EXPECT_THROW(plv_matrix(noise(1, 256, 128.0, 1), band_by_name("alpha")), ConfigError);
  const EegRecording r = noise(3, 1280, 128.0, 2);
  const auto w = windowed_plv(r, band_by_name("alpha"), 3.0);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[1].window.first, 3.0, 1e-12);
  EXPECT_NEAR(w[1].window.second, 6.0, 1e-12);
  const auto direct = plv_matrix(r, band_by_name("alpha"), std::make_pair(3.0, 6.0));
  EXPECT_EQ(direct.values, w[1].values);
  for (const auto& m : w) expect_plv_invariants(m);
  EXPECT_THROW(plv_matrix(r, band_by_name("alpha"), std::make_pair(5.0, 50.0)), ConfigError);
}

TEST(ComparePlv, IdentityAndSymmetry) {
  const auto a = plv_matrix(noise(6, 512, 128.0, 1), band_by_name("alpha"));
  const auto b = plv_matrix(noise(6, 512, 128.0, 2), band_by_name("alpha"));
  const auto self = compare_plv(a, a);
  EXPECT_NEAR(self.correlation, 1.0, 1e-12);
  EXPECT_EQ(self.mad, 0.0);
  EXPECT_EQ(self.overlap, 1.0);
  const auto ab = compare_plv(a, b), ba = compare_plv(b, a);
  EXPECT_NEAR(ab.correlation, ba.correlation, 1e-15);
  EXPECT_NEAR(ab.mad, ba.mad, 1e-15);
  EXPECT_EQ(ab.overlap, ba.overlap);
}

TEST(ComparePlv, PermutedChannelsLoseOverlap) {
  EegRecording r = noise(8, 512, 128.0, 3);
  // Give channel pairs distinct coupling so the top edges are well defined.
  for (std::size_t c = 1; c < 4; ++c)
    for (std::size_t t = 0; t < r.samples; ++t) r.at(c, t) = r.at(0, t) * 0.5 + r.at(c, t) * 0.3 * double(c);
  const auto a = plv_matrix(r, band_by_name("alpha"));
  EegRecording p = r;
  const std::size_t perm[] = {7, 6, 5, 4, 3, 2, 1, 0};
  for (std::size_t c = 0; c < 8; ++c) std::copy_n(r.row(perm[c]), r.samples, p.row(c));
  const auto b = plv_matrix(p, band_by_name("alpha"));
  const auto cmp = compare_plv(a, b, 3);
  EXPECT_LT(cmp.overlap, 1.0);
  EXPECT_THROW(compare_plv(a, plv_matrix(noise(4, 512, 128.0, 1), band_by_name("alpha"))), DimensionError);
  EXPECT_THROW(compare_plv(a, plv_matrix(r, band_by_name("beta"))), ConfigError);
}

// ---- montage ------------------------------------------------------------------

TEST(Montage, SingleNodePeaksAtItsCell) {
  const std::vector<std::string> labels{"Fz", "Cz", "Pz", "C3", "C4", "O1"};
  for (std::size_t hot = 0; hot < labels.size(); ++hot) {
    std::vector<double> v(labels.size(), 0.0);
    v[hot] = 1.0;
    const auto t = montage_project(v, labels, standard_1020_montage());
    std::size_t best = 0;
    for (std::size_t i = 0; i < t.grid.size(); ++i)
      if (!std::isnan(t.grid[i]) && (std::isnan(t.grid[best]) || t.grid[i] > t.grid[best])) best = i;
    // A node on a cell boundary belongs to every cell it touches.
    const auto [x, y] = standard_1020_montage().at(labels[hot]);
    const auto [cx, cy] = Topography::center_of(best / Topography::kGrid, best % Topography::kGrid);
    const double half = 1.0 / double(Topography::kGrid);
    EXPECT_LE(std::abs(cx - x), half + 1e-12) << labels[hot];
    EXPECT_LE(std::abs(cy - y), half + 1e-12) << labels[hot];
    const auto [row, col] = Topography::cell_of(x, y);
    EXPECT_LE(std::abs(double(row) - double(best / Topography::kGrid)), 1.0);
    EXPECT_LE(std::abs(double(col) - double(best % Topography::kGrid)), 1.0);
  }
}

TEST(Montage, UniformValuesGiveUniformField) {
  const std::vector<std::string> labels{"Fp1", "Fp2", "T7", "T8", "Cz"};
  const std::vector<double> v(labels.size(), 0.37);
  const auto t = montage_project(v, labels, standard_1020_montage());
  std::size_t inside = 0;
  for (double g : t.grid) {
    if (std::isnan(g)) continue;
    ++inside;
    EXPECT_NEAR(g, 0.37, 1e-9);
  }
  EXPECT_GT(inside, 3000u);  // pi/4 of 4096
}

TEST(Montage, PercentileEdges) {
  EegRecording r = noise(6, 512, 128.0, 5);
  r.channel_labels = {"Fz", "Cz", "Pz", "C3", "C4", "Oz"};
  const auto m = plv_matrix(r, band_by_name("alpha"));
  EXPECT_TRUE(montage_project(m, standard_1020_montage(), 100.0).edges.empty());
  const auto t = montage_project(m, standard_1020_montage(), 0.0);
  EXPECT_EQ(t.edges.size(), 14u);  // all 15 but the minimum
  const auto top = montage_project(m, standard_1020_montage(), 95.0);
  EXPECT_EQ(top.edges.size(), 1u);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50.0), 2.5);
}

TEST(Montage, MissingChannelsAreListed) {
  const std::vector<std::string> labels{"Fz", "Xq1", "Cz", "Xq2"};
  const std::vector<double> v(4, 1.0);
  try {
    montage_project(v, labels, standard_1020_montage());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("Xq1"), std::string::npos);
    EXPECT_NE(w.find("Xq2"), std::string::npos);
  }
  const auto ring = ring_montage(labels);
  EXPECT_NO_THROW(montage_project(v, labels, ring));
}

TEST(Montage, CsvLoad) {
  const auto path = (std::filesystem::temp_directory_path() / "big_montage.csv").string();
  {
    std::ofstream out(path);
    out << "label,x,y\nA,0.1,0.2\nB,-0.5,0\n";
  }
  const auto m = load_montage_csv(path);
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("B").first, -0.5);
  {
    std::ofstream out(path);
    out << "label,x,y\nA,zero,0.2\n";
  }
  EXPECT_THROW(load_montage_csv(path), ParseError);
  std::filesystem::remove(path);
}

// ---- ROC ----------------------------------------------------------------------

TEST(Roc, PerfectSeparation) {
  const std::vector<int> y{0, 0, 1, 1, 0, 1};
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9, 0.3, 0.7};
  const auto c = roc_curve(y, s);
  EXPECT_EQ(c.auc, 1.0);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  EXPECT_EQ(c.points.back().fpr, 1.0);
}

TEST(Roc, MatchesMannWhitney) {
  Rng rng(8);
  for (int inst = 0; inst < 30; ++inst) {
    const std::size_t n = 5 + rng.below(200);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i < 2 ? int(i) : int(rng.below(2));
      s[i] = double(rng.below(20)) / 19.0;  // plenty of ties
    }
    EXPECT_NEAR(roc_curve(y, s).auc, mann_whitney_auc(y, s), 1e-12);
  }
}

TEST(Roc, InvariantUnderMonotoneTransform) {
  Rng rng(12);
  std::vector<int> y(300);
  std::vector<double> s(300), t(300);
  for (std::size_t i = 0; i < 300; ++i) {
    y[i] = int(rng.below(2));
    s[i] = rng.uniform(0, 1) + 0.3 * y[i];
    t[i] = std::exp(5.0 * s[i]) - 2.0;
  }
  EXPECT_NEAR(roc_curve(y, s).auc, roc_curve(y, t).auc, 1e-12);
}

TEST(Roc, NullScoresNearHalf) {
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<int> y(10000);
    std::vector<double> s(10000);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = int(rng.below(2));
      s[i] = rng.uniform(0, 1);
    }
    const double auc = roc_curve(y, s).auc;
    ok += auc >= 0.48 && auc <= 0.52;
  }
  EXPECT_GE(ok, 99u);
}

TEST(Roc, ErrorsAndMulticlass) {
  EXPECT_THROW(roc_curve(std::vector<int>{1, 1}, std::vector<double>{0.2, 0.3}), ConfigError);
  EXPECT_THROW(roc_curve(std::vector<int>{1, 0}, std::vector<double>{0.2}), DimensionError);
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  // Rows put most mass on the true class.
  std::vector<double> p;
  for (int k : y)
    for (int c = 0; c < 3; ++c) p.push_back(c == k ? 0.8 : 0.1);
  const auto m = roc_one_vs_rest(y, p, 3);
  ASSERT_EQ(m.per_class.size(), 3u);
  EXPECT_EQ(m.macro_auc, 1.0);
  EXPECT_THROW(roc_one_vs_rest(std::vector<int>{0, 0, 1}, std::vector<double>(9, 1.0 / 3), 3), ConfigError);
}

// ---- cost model ---------------------------------------------------------------

TEST(Cost, SingleConvClosedForm) {
  Architecture a;
  LayerSpec l;
  l.name = "c";
  l.kind = LayerKind::Conv;
  l.in_channels = 1;
  l.out_channels = 8;
  l.kernel = 64;
  l.out_length = 100;
  a.layers.push_back(l);
  EXPECT_EQ(flop_estimate(a).total.macs, 51200u);
  a.layers[0].out_length = 200;
  EXPECT_EQ(flop_estimate(a).total.macs, 102400u);
  EXPECT_EQ(flop_estimate(Architecture{}).total.macs, 0u);
}

TEST(Cost, MissingDimensionIsNamed) {
  Architecture a;
  LayerSpec l;
  l.name = "dense_out";
  l.kind = LayerKind::Dense;
  l.in_channels = 10;
  a.layers.push_back(l);
  try {
    flop_estimate(a);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("out_channels"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("dense_out"), std::string::npos) << e.what();
  }
}

TEST(Cost, SpikingLayerScalesWithDensity) {
  Architecture a;
  LayerSpec l;
  l.name = "s";
  l.kind = LayerKind::Spiking;
  l.in_channels = 10;
  l.out_channels = 20;
  l.in_length = 100;
  l.density = 0.25;
  a.layers.push_back(l);
  EXPECT_EQ(flop_estimate(a).total.accumulates, 5000u);
  EXPECT_EQ(flop_estimate(a).total.macs, 0u);
}

TEST(Cost, ClassifierFirstConvMatchesHandCount) {
  ClassifierConfig c;
  c.in_channels = 64;
  c.length = 64;
  const auto r = flop_estimate(classifier_architecture(c));
  EXPECT_EQ(r.layers[0].name, "conv0");
  EXPECT_EQ(r.layers[0].counts.macs, 8u * 64u * 64u * 64u);
}

TEST(Cost, AnalyticEqualsInstrumentedClassifier) {
  Rng rng(21);
  for (int trial = 0; trial < 4; ++trial) {
    ClassifierConfig c;
    c.in_channels = 1 + rng.below(6);
    c.pool1 = 1 + rng.below(4);
    c.pool2 = 1 + rng.below(4);
    c.length = c.pool1 * c.pool2 * (1 + rng.below(5)) + rng.below(3);
    c.filters = {1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
    c.kernels = {1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(5)};
    c.n_classes = 2 + rng.below(2);
    Classifier cls(c, 3);
    const std::size_t batch = 1 + rng.below(3);
    Tensor x({batch, c.in_channels, c.length}, std::vector<double>(batch * c.in_channels * c.length, 0.5));
    CountScope scope;
    cls.logits(x, false);
    const auto est = flop_estimate(classifier_architecture(c, batch));
    EXPECT_EQ(est.total.macs, scope.counts().macs) << trial;
    EXPECT_EQ(est.total.other, scope.counts().other) << trial;
    EXPECT_EQ(est.total.accumulates, scope.counts().accumulates) << trial;
  }
}

TEST(Cost, AnalyticEqualsInstrumentedEegNet) {
  EegNetConfig e;
  e.channels = 5;
  e.length = 64;
  e.kernel = 16;
  const std::size_t batch = 2;
  Tensor x({batch, e.channels, e.length}, std::vector<double>(batch * e.channels * e.length, 0.1));
  CountScope scope;
  const Tensor y = eegnet_forward(e, x, 1);
  EXPECT_EQ(y.shape(), (Shape{batch, 2}));
  const auto est = flop_estimate(eegnet_architecture(e, batch));
  EXPECT_EQ(est.total.macs, scope.counts().macs);
  EXPECT_EQ(est.total.other, scope.counts().other);
  EXPECT_EQ(est.layers[0].counts.macs, batch * e.channels * e.f1 * e.kernel * e.length);
}

TEST(Cost, CsvWriterHasTotals) {
  ClassifierConfig c;
  c.in_channels = 2;
  c.length = 64;
  const auto path = (std::filesystem::temp_directory_path() / "big_cost.csv").string();
  write_cost_csv(path, flop_estimate(classifier_architecture(c)));
  std::ifstream in(path);
  std::string first, line, last;
  std::getline(in, first);
  while (std::getline(in, line)) last = line;
  EXPECT_EQ(first, "layer,kind,macs,accumulates,other");
  EXPECT_EQ(last.rfind("total,,", 0), 0u);
  std::filesystem::remove(path);
}

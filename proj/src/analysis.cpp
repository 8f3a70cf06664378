#include "big/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "big/dsp.hpp"
#include "big/error.hpp"
#include "big/init.hpp"
#include "big/ops.hpp"
#include "big/rng.hpp"

namespace big {

// ---- firing rates -------------------------------------------------------------

FiringReport firing_rates(const SpikeTrain& train, std::size_t channels) {
  train.validate();
  FiringReport r;
  r.duration = static_cast<double>(train.steps) * train.dt;
  const std::size_t groups = channels == 0 ? train.neurons : channels;
  if (groups == 0 || train.neurons % groups != 0) {
    throw ConfigError("firing_rates: " + std::to_string(train.neurons) + " neurons do not split into " +
                      std::to_string(groups) + " channels");
  }
  r.neuron_rates.assign(train.neurons, 0.0);
  for (std::size_t n = 0; n < train.neurons; ++n) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < train.steps; ++t) {
      if (train.at(n, t)) {
        ++count;
        r.raster.emplace_back(n, t);
      }
    }
    r.neuron_rates[n] = r.duration > 0.0 ? static_cast<double>(count) / r.duration : 0.0;
  }
  const std::size_t per = train.neurons / groups;
  r.channel_rates.assign(groups, 0.0);
  for (std::size_t c = 0; c < groups; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += r.neuron_rates[c * per + i];
    r.channel_rates[c] = s / static_cast<double>(per);
  }
  return r;
}

// ---- phase locking --------------------------------------------------------------

void PlvMatrix::validate() const {
  if (values.size() != channels * channels) throw ContractError("plv: matrix size does not match channel count");
  for (std::size_t a = 0; a < channels; ++a) {
    if (std::abs(at(a, a) - 1.0) > 1e-12) throw ContractError("plv: diagonal entry differs from 1");
    for (std::size_t b = 0; b < channels; ++b) {
      const double v = at(a, b);
      if (!(v >= 0.0 && v <= 1.0)) throw ContractError("plv: entry outside [0, 1]");
      if (std::abs(v - at(b, a)) > 1e-12) throw ContractError("plv: matrix is not symmetric");
    }
  }
}

namespace {

// Unit phasors of the band-limited analytic signal, one row per channel.
std::vector<std::vector<std::complex<double>>> phasors(const EegRecording& rec, const BandSpec& band) {
  const EegRecording f = bandpass_filter(rec, band);
  std::vector<std::vector<std::complex<double>>> out(rec.channels);
  for (std::size_t c = 0; c < rec.channels; ++c) {
    auto a = dsp::analytic_signal(std::span<const double>(f.row(c), f.samples));
    for (auto& z : a) {
      const double m = std::abs(z);
      z = m > 0.0 ? z / m : std::complex<double>(1.0, 0.0);
    }
    out[c] = std::move(a);
  }
  return out;
}

PlvMatrix plv_from_phasors(const EegRecording& rec, const BandSpec& band,
                           const std::vector<std::vector<std::complex<double>>>& u, std::size_t begin,
                           std::size_t end) {
  PlvMatrix m;
  m.channels = rec.channels;
  m.band = band;
  m.labels = rec.channel_labels;
  m.window = {static_cast<double>(begin) / rec.sample_rate, static_cast<double>(end) / rec.sample_rate};
  m.values.assign(m.channels * m.channels, 0.0);
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (std::size_t a = 0; a < m.channels; ++a) {
    m.values[a * m.channels + a] = 1.0;
    for (std::size_t b = a + 1; b < m.channels; ++b) {
      std::complex<double> s(0.0, 0.0);
      for (std::size_t t = begin; t < end; ++t) s += u[a][t] * std::conj(u[b][t]);
      const double v = std::min(1.0, std::abs(s) * inv);
      m.values[a * m.channels + b] = v;
      m.values[b * m.channels + a] = v;
    }
  }
  return m;
}

void check_plv_input(const EegRecording& rec) {
  rec.validate();
  if (rec.channels < 2) throw ConfigError("plv: need at least 2 channels, got " + std::to_string(rec.channels));
}

}  // namespace

PlvMatrix plv_matrix(const EegRecording& rec, const BandSpec& band, std::optional<std::pair<double, double>> window) {
  check_plv_input(rec);
  std::size_t begin = 0, end = rec.samples;
  if (window) {
    const auto [s, e] = *window;
    if (!(s >= 0.0 && e > s && e <= rec.duration() + 1e-9)) {
      throw ConfigError("plv: window [" + std::to_string(s) + ", " + std::to_string(e) + ") s outside the recording");
    }
    begin = static_cast<std::size_t>(std::llround(s * rec.sample_rate));
    end = std::min(rec.samples, static_cast<std::size_t>(std::llround(e * rec.sample_rate)));
    if (end <= begin) throw ConfigError("plv: window holds no samples");
  }
  return plv_from_phasors(rec, band, phasors(rec, band), begin, end);
}

std::vector<PlvMatrix> windowed_plv(const EegRecording& rec, const BandSpec& band, double seconds) {
  check_plv_input(rec);
  if (!(seconds > 0.0)) throw ConfigError("plv: window length must be positive");
  const auto len = static_cast<std::size_t>(std::llround(seconds * rec.sample_rate));
  if (len == 0 || len > rec.samples) throw ConfigError("plv: window longer than the recording or empty");
  const auto u = phasors(rec, band);
  std::vector<PlvMatrix> out;
  for (std::size_t b = 0; b + len <= rec.samples; b += len) out.push_back(plv_from_phasors(rec, band, u, b, b + len));
  return out;
}

namespace {

std::vector<double> upper(const PlvMatrix& m) {
  std::vector<double> v;
  for (std::size_t a = 0; a < m.channels; ++a)
    for (std::size_t b = a + 1; b < m.channels; ++b) v.push_back(m.at(a, b));
  return v;
}

std::vector<std::size_t> top_edges(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] > v[j]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

PlvComparison compare_plv(const PlvMatrix& a, const PlvMatrix& b, std::size_t top_k) {
  if (a.channels != b.channels) {
    throw DimensionError("compare_plv: " + std::to_string(a.channels) + " vs " + std::to_string(b.channels) +
                         " channels");
  }
  if (a.band.name != b.band.name) throw ConfigError("compare_plv: bands differ ('" + a.band.name + "', '" + b.band.name + "')");
  if (a.channels < 2) throw ConfigError("compare_plv: need at least 2 channels");
  if (top_k == 0) throw ConfigError("compare_plv: top_k must be positive");
  const auto x = upper(a), y = upper(b);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0, mad = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    mad += std::abs(x[i] - y[i]);
  }
  PlvComparison r;
  if (sxx > 0.0 && syy > 0.0) {
    r.correlation = sxy / std::sqrt(sxx * syy);
  } else {
    r.correlation = x == y ? 1.0 : 0.0;  // a constant triangle has no defined correlation
  }
  r.mad = mad / n;
  r.k = std::min(top_k, x.size());
  const auto ta = top_edges(x, r.k), tb = top_edges(y, r.k);
  std::vector<std::size_t> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
  r.overlap = static_cast<double>(common.size()) / static_cast<double>(r.k);
  return r;
}

// ---- montage ------------------------------------------------------------------

const Montage& standard_1020_montage() {
  static const Montage m = [] {
    const double pi = std::acos(-1.0);
    Montage out;
    auto ring = [&](const std::string& name, double deg) {
      // Outer ring at radius 0.8, angle measured from the nose, clockwise.
      out[name] = {0.8 * std::sin(deg * pi / 180.0), 0.8 * std::cos(deg * pi / 180.0)};
    };
    ring("Fpz", 0);
    ring("Fp2", 18);
    ring("F8", 54);
    ring("T8", 90);
    ring("P8", 126);
    ring("O2", 162);
    ring("Oz", 180);
    ring("O1", -162);
    ring("P7", -126);
    ring("T7", -90);
    ring("F7", -54);
    ring("Fp1", -18);
    out["T4"] = out["T8"];
    out["T3"] = out["T7"];
    out["T6"] = out["P8"];
    out["T5"] = out["P7"];
    out["Fz"] = {0.0, 0.4};
    out["Cz"] = {0.0, 0.0};
    out["Pz"] = {0.0, -0.4};
    out["C3"] = {-0.4, 0.0};
    out["C4"] = {0.4, 0.0};
    out["F3"] = {-0.33, 0.43};
    out["F4"] = {0.33, 0.43};
    out["P3"] = {-0.33, -0.43};
    out["P4"] = {0.33, -0.43};
    return out;
  }();
  return m;
}

Montage ring_montage(std::span<const std::string> labels) {
  const double pi = std::acos(-1.0);
  Montage out;
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double a = pi / 2.0 - 2.0 * pi * static_cast<double>(i) / n;
    out[labels[i]] = {0.8 * std::cos(a), 0.8 * std::sin(a)};
  }
  return out;
}

Montage load_montage_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read montage " + path);
  Montage out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::istringstream ls(line);
    std::string label, xs, ys;
    if (!std::getline(ls, label, ',') || !std::getline(ls, xs, ',') || !std::getline(ls, ys)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected label,x,y");
    }
    try {
      out[label] = {std::stod(xs), std::stod(ys)};
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad coordinate");
    }
  }
  return out;
}

std::pair<double, double> Topography::center_of(std::size_t row, std::size_t col) {
  const double h = 2.0 / static_cast<double>(kGrid);
  return {-1.0 + (static_cast<double>(col) + 0.5) * h, 1.0 - (static_cast<double>(row) + 0.5) * h};
}

std::pair<std::size_t, std::size_t> Topography::cell_of(double x, double y) {
  const double h = 2.0 / static_cast<double>(kGrid);
  auto clamp = [](double v) {
    return static_cast<std::size_t>(std::clamp(std::floor(v), 0.0, static_cast<double>(kGrid - 1)));
  };
  return {clamp((1.0 - y) / h), clamp((x + 1.0) / h)};
}

Topography montage_project(std::span<const double> node_values, std::span<const std::string> labels,
                           const Montage& montage) {
  if (node_values.size() != labels.size()) {
    throw DimensionError("montage: " + std::to_string(node_values.size()) + " values for " +
                         std::to_string(labels.size()) + " channels");
  }
  if (labels.empty()) throw ConfigError("montage: no channels");
  std::vector<std::pair<double, double>> pos;
  std::string missing;
  for (const auto& l : labels) {
    const auto it = montage.find(l);
    if (it == montage.end()) {
      missing += (missing.empty() ? "" : ", ") + l;
      continue;
    }
    pos.push_back(it->second);
  }
  if (!missing.empty()) throw ConfigError("montage has no coordinates for channel(s): " + missing);

  Topography t;
  const std::size_t g = Topography::kGrid;
  t.grid.assign(g * g, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const auto [x, y] = Topography::center_of(r, c);
      if (x * x + y * y > 1.0) continue;
      double num = 0.0, den = 0.0;
      bool exact = false;
      for (std::size_t i = 0; i < pos.size() && !exact; ++i) {
        const double dx = x - pos[i].first, dy = y - pos[i].second;
        const double d2 = dx * dx + dy * dy;
        if (d2 < 1e-24) {
          num = node_values[i];
          den = 1.0;
          exact = true;
        } else {
          num += node_values[i] / d2;
          den += 1.0 / d2;
        }
      }
      t.grid[r * g + c] = num / den;
    }
  }
  return t;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Topography montage_project(const PlvMatrix& plv, const Montage& montage, double pct) {
  plv.validate();
  if (plv.labels.size() != plv.channels) throw ConfigError("montage: PLV matrix lacks channel labels");
  std::vector<double> node(plv.channels, 0.0);
  for (std::size_t a = 0; a < plv.channels; ++a) {
    for (std::size_t b = 0; b < plv.channels; ++b)
      if (a != b) node[a] += plv.at(a, b);
    node[a] /= static_cast<double>(plv.channels - 1);
  }
  Topography t = montage_project(node, plv.labels, montage);
  const auto tri = upper(plv);
  t.threshold = percentile(tri, pct);
  for (std::size_t a = 0; a < plv.channels; ++a)
    for (std::size_t b = a + 1; b < plv.channels; ++b)
      if (plv.at(a, b) > t.threshold) t.edges.push_back({plv.labels[a], plv.labels[b], plv.at(a, b)});
  return t;
}

// ---- ROC ----------------------------------------------------------------------

RocCurve roc_curve(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw DimensionError("roc: " + std::to_string(labels.size()) + " labels for " + std::to_string(scores.size()) +
                         " scores");
  }
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("roc: binary labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw NumericError("roc: non-finite score at index " + std::to_string(i));
    (labels[i] == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw ConfigError("roc: both classes must be present");

  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve c;
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == s; ++i) (labels[idx[i]] == 1 ? tp : fp)++;
    c.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const auto& a = c.points[i - 1];
    const auto& b = c.points[i];
    c.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return c;
}

MulticlassRoc roc_one_vs_rest(std::span<const int> labels, std::span<const double> probabilities, std::size_t classes) {
  if (classes < 2) throw ConfigError("roc: need at least 2 classes");
  if (probabilities.size() != labels.size() * classes) {
    throw DimensionError("roc: probability matrix does not hold " + std::to_string(labels.size()) + " rows of " +
                         std::to_string(classes));
  }
  MulticlassRoc out;
  std::vector<int> bin(labels.size());
  std::vector<double> s(labels.size());
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
        throw ConfigError("roc: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
      }
      bin[i] = static_cast<std::size_t>(labels[i]) == k ? 1 : 0;
      s[i] = probabilities[i * classes + k];
    }
    out.per_class.push_back(roc_curve(bin, s));
    out.macro_auc += out.per_class.back().auc;
  }
  out.macro_auc /= static_cast<double>(classes);
  return out;
}

// ---- cost model ---------------------------------------------------------------

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvTranspose: return "conv_transpose";
    case LayerKind::Dense: return "dense";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Activation: return "activation";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Spiking: return "spiking";
    case LayerKind::Passthrough: return "passthrough";
  }
  return "?";
}

namespace {

std::uint64_t need(const LayerSpec& l, const std::optional<std::size_t>& v, const char* dim) {
  if (!v) throw ConfigError("layer '" + l.name + "' (" + to_string(l.kind) + "): missing dimension '" + dim + "'");
  return *v;
}

}  // namespace

CostReport flop_estimate(const Architecture& arch) {
  CostReport r;
  const std::uint64_t n = arch.batch;
  for (const auto& l : arch.layers) {
    LayerCost c{l.name, l.kind, {}};
    switch (l.kind) {
      case LayerKind::Conv: {
        const std::uint64_t g = l.groups ? *l.groups : 1;
        const std::uint64_t cin = need(l, l.in_channels, "in_channels");
        if (g == 0 || cin % g != 0) throw ConfigError("layer '" + l.name + "': in_channels not divisible by groups");
        c.counts.macs = n * need(l, l.out_channels, "out_channels") * (cin / g) * need(l, l.kernel, "kernel") *
                        need(l, l.out_length, "out_length");
        break;
      }
      case LayerKind::ConvTranspose:
        c.counts.macs = n * need(l, l.in_channels, "in_channels") * need(l, l.out_channels, "out_channels") *
                        need(l, l.kernel, "kernel") * need(l, l.in_length, "in_length");
        break;
      case LayerKind::Dense:
        c.counts.macs = n * need(l, l.in_channels, "in_channels") * need(l, l.out_channels, "out_channels");
        break;
      case LayerKind::BatchNorm:
        c.counts.other = n * need(l, l.in_channels, "in_channels") * need(l, l.in_length, "in_length");
        break;
      case LayerKind::Activation:
      case LayerKind::Softmax:
        c.counts.other = n * need(l, l.units, "units");
        break;
      case LayerKind::AvgPool:
        c.counts.other = n * need(l, l.in_channels, "in_channels") * need(l, l.out_length, "out_length") *
                         need(l, l.window, "window");
        break;
      case LayerKind::Spiking: {
        if (!l.density) throw ConfigError("layer '" + l.name + "' (spiking): missing dimension 'density'");
        if (!(*l.density >= 0.0 && *l.density <= 1.0)) throw ConfigError("layer '" + l.name + "': density outside [0, 1]");
        const double full = static_cast<double>(n * need(l, l.in_channels, "in_channels") *
                                                need(l, l.out_channels, "out_channels") *
                                                need(l, l.in_length, "in_length"));
        c.counts.accumulates = static_cast<std::uint64_t>(std::llround(*l.density * full));
        break;
      }
      case LayerKind::Passthrough:
        break;
    }
    r.total.macs += c.counts.macs;
    r.total.accumulates += c.counts.accumulates;
    r.total.other += c.counts.other;
    r.layers.push_back(std::move(c));
  }
  return r;
}

namespace {

LayerSpec conv(std::string name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t lout,
               std::size_t groups = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::Conv;
  l.in_channels = cin;
  l.out_channels = cout;
  l.kernel = k;
  l.out_length = lout;
  l.groups = groups;
  return l;
}

LayerSpec bn(std::string name, std::size_t ch, std::size_t len) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::BatchNorm;
  l.in_channels = ch;
  l.in_length = len;
  return l;
}

LayerSpec act(std::string name, std::size_t units, LayerKind kind = LayerKind::Activation) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.units = units;
  return l;
}

LayerSpec pool(std::string name, std::size_t ch, std::size_t lin, std::size_t window) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::AvgPool;
  l.in_channels = ch;
  l.out_length = lin / window;
  l.window = window;
  return l;
}

LayerSpec dense(std::string name, std::size_t in, std::size_t out) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::Dense;
  l.in_channels = in;
  l.out_channels = out;
  return l;
}

LayerSpec pass(std::string name) {
  LayerSpec l;
  l.name = std::move(name);
  return l;
}

}  // namespace

Architecture classifier_architecture(const ClassifierConfig& cfg, std::size_t batch) {
  cfg.validate();
  Architecture a;
  a.name = "big-classifier";
  a.batch = batch;
  const auto& f = cfg.filters;
  const auto& k = cfg.kernels;
  std::size_t len = cfg.length;
  std::size_t ch = cfg.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i == 2) {
      a.layers.push_back(pool("pool0", ch, len, cfg.pool1));
      len /= cfg.pool1;
      a.layers.push_back(pass("dropout0"));
    }
    const std::string s = std::to_string(i);
    a.layers.push_back(conv("conv" + s, ch, f[i], k[i], len));
    a.layers.push_back(bn("bn" + s, f[i], len));
    a.layers.push_back(act("relu" + s, f[i] * len));
    ch = f[i];
  }
  a.layers.push_back(pool("pool1", ch, len, cfg.pool2));
  len /= cfg.pool2;
  a.layers.push_back(pass("dropout1"));
  a.layers.push_back(pass("flatten"));
  a.layers.push_back(dense("dense", ch * len, cfg.n_classes));
  return a;
}

void EegNetConfig::validate() const {
  if (channels == 0 || n_classes < 2 || f1 == 0 || depth == 0 || f2 == 0 || kernel == 0 || separable_kernel == 0 ||
      pool1 == 0 || pool2 == 0) {
    throw ConfigError("eegnet: all sizes must be positive and n_classes >= 2");
  }
  if (length == 0 || length % (pool1 * pool2) != 0) {
    throw ConfigError("eegnet: length " + std::to_string(length) + " must be a positive multiple of " +
                      std::to_string(pool1 * pool2));
  }
}

Architecture eegnet_architecture(const EegNetConfig& cfg, std::size_t batch) {
  cfg.validate();
  Architecture a;
  a.name = "eegnet-baseline";
  a.batch = batch;
  const std::size_t C = cfg.channels, L = cfg.length, fd = cfg.f1 * cfg.depth;
  a.layers.push_back(conv("temporal", C, C * cfg.f1, cfg.kernel, L, C));
  a.layers.push_back(bn("bn0", cfg.f1, C * L));
  a.layers.push_back(conv("depthwise", cfg.f1 * C, fd, 1, L, cfg.f1));
  a.layers.push_back(bn("bn1", fd, L));
  a.layers.push_back(act("relu1", fd * L));
  a.layers.push_back(pool("pool0", fd, L, cfg.pool1));
  a.layers.push_back(pass("dropout0"));
  const std::size_t l1 = L / cfg.pool1;
  a.layers.push_back(conv("separable_depthwise", fd, fd, cfg.separable_kernel, l1, fd));
  a.layers.push_back(conv("separable_pointwise", fd, cfg.f2, 1, l1));
  a.layers.push_back(bn("bn2", cfg.f2, l1));
  a.layers.push_back(act("relu2", cfg.f2 * l1));
  a.layers.push_back(pool("pool1", cfg.f2, l1, cfg.pool2));
  a.layers.push_back(pass("dropout1"));
  a.layers.push_back(pass("flatten"));
  a.layers.push_back(dense("dense", cfg.f2 * (l1 / cfg.pool2), cfg.n_classes));
  return a;
}

Tensor eegnet_forward(const EegNetConfig& cfg, const Tensor& x, std::uint64_t seed) {
  cfg.validate();
  if (x.rank() != 3 || x.dim(1) != cfg.channels || x.dim(2) != cfg.length) {
    throw DimensionError("eegnet: expected [N x " + std::to_string(cfg.channels) + " x " +
                         std::to_string(cfg.length) + "], got " + shape_str(x.shape()));
  }
  const std::size_t N = x.dim(0), C = cfg.channels, L = cfg.length, fd = cfg.f1 * cfg.depth;
  auto zeros = [](std::size_t n) { return Tensor({n}, std::vector<double>(n, 0.0)); };
  auto ones = [](std::size_t n) { return Tensor({n}, std::vector<double>(n, 1.0)); };
  auto same = [](std::size_t k) {
    ops::Conv1dOptions o;
    o.pad_left = (k - 1) / 2;
    o.pad_right = k - 1 - o.pad_left;
    return o;
  };

  // Temporal filters shared across electrodes: one group per electrode, the
  // same f1 kernels in each. Output channel c * f1 + f.
  const Tensor base = glorot_uniform({cfg.f1, 1, cfg.kernel}, cfg.kernel, cfg.f1 * cfg.kernel, derive_seed(seed, {0}));
  std::vector<double> tiled;
  for (std::size_t c = 0; c < C; ++c) tiled.insert(tiled.end(), base.data().begin(), base.data().end());
  auto opt = same(cfg.kernel);
  opt.groups = C;
  Tensor h = ops::conv1d(x, Tensor({C * cfg.f1, 1, cfg.kernel}, std::move(tiled)), zeros(C * cfg.f1), opt);

  // Regroup to f * C + c so each temporal filter's maps are contiguous.
  std::vector<std::size_t> order;
  for (std::size_t f = 0; f < cfg.f1; ++f)
    for (std::size_t c = 0; c < C; ++c) order.push_back(c * cfg.f1 + f);
  h = ops::index_select(h, 1, order);
  ops::BatchNormState s0(cfg.f1), s1(fd), s2(cfg.f2);
  h = ops::reshape(ops::batchnorm1d(ops::reshape(h, {N, cfg.f1, C * L}), ones(cfg.f1), zeros(cfg.f1), s0, false),
                   {N, cfg.f1 * C, L});

  ops::Conv1dOptions dw;
  dw.groups = cfg.f1;
  h = ops::conv1d(h, glorot_uniform({fd, C, 1}, C, cfg.depth, derive_seed(seed, {1})), zeros(fd), dw);
  h = ops::relu(ops::batchnorm1d(h, ones(fd), zeros(fd), s1, false));
  h = ops::dropout(ops::avgpool1d(h, cfg.pool1), 0.25, false, 0);

  auto sep = same(cfg.separable_kernel);
  sep.groups = fd;
  h = ops::conv1d(h, glorot_uniform({fd, 1, cfg.separable_kernel}, cfg.separable_kernel, cfg.separable_kernel,
                                    derive_seed(seed, {2})),
                  zeros(fd), sep);
  h = ops::conv1d(h, glorot_uniform({cfg.f2, fd, 1}, fd, cfg.f2, derive_seed(seed, {3})), zeros(cfg.f2), 1, 0);
  h = ops::relu(ops::batchnorm1d(h, ones(cfg.f2), zeros(cfg.f2), s2, false));
  h = ops::dropout(ops::avgpool1d(h, cfg.pool2), 0.25, false, 0);
  const std::size_t flat = h.dim(1) * h.dim(2);
  h = ops::reshape(h, {N, flat});
  const Tensor w = glorot_uniform({flat, cfg.n_classes}, flat, cfg.n_classes, derive_seed(seed, {4}));
  return ops::add(ops::matmul(h, w), zeros(cfg.n_classes));
}

// ---- writers ------------------------------------------------------------------

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  return out;
}

}  // namespace

void write_rates_csv(const std::string& path, const FiringReport& r) {
  auto out = open_csv(path);
  out << "channel,rate_hz\n";
  for (std::size_t c = 0; c < r.channel_rates.size(); ++c) out << c << ',' << r.channel_rates[c] << '\n';
}

void write_plv_csv(const std::string& path, const PlvMatrix& m) {
  auto out = open_csv(path);
  for (std::size_t c = 0; c < m.channels; ++c) {
    out << (c ? "," : "") << (c < m.labels.size() ? m.labels[c] : "Ch" + std::to_string(c + 1));
  }
  out << '\n';
  for (std::size_t a = 0; a < m.channels; ++a) {
    for (std::size_t b = 0; b < m.channels; ++b) out << (b ? "," : "") << m.at(a, b);
    out << '\n';
  }
}

void write_topography_csv(const std::string& path, const Topography& t) {
  auto out = open_csv(path);
  const std::size_t g = Topography::kGrid;
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const double v = t.grid[r * g + c];
      out << (c ? "," : "");
      if (std::isnan(v)) {
        out << "nan";
      } else {
        out << v;
      }
    }
    out << '\n';
  }
}

void write_edges_csv(const std::string& path, const Topography& t) {
  auto out = open_csv(path);
  out << "channel_a,channel_b,weight\n";
  for (const auto& e : t.edges) out << e.a << ',' << e.b << ',' << e.weight << '\n';
}

void write_roc_csv(const std::string& path, const RocCurve& c) {
  auto out = open_csv(path);
  out << "fpr,tpr\n";
  for (const auto& p : c.points) out << p.fpr << ',' << p.tpr << '\n';
}

void write_cost_csv(const std::string& path, const CostReport& r) {
  auto out = open_csv(path);
  out << "layer,kind,macs,accumulates,other\n";
  for (const auto& l : r.layers) {
    out << l.name << ',' << to_string(l.kind) << ',' << l.counts.macs << ',' << l.counts.accumulates << ','
        << l.counts.other << '\n';
  }
  out << "total,," << r.total.macs << ',' << r.total.accumulates << ',' << r.total.other << '\n';
}

}  // namespace big

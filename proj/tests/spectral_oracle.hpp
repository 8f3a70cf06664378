#pragma once

// Test-only spectral helpers built on a direct O(n^2) DFT, kept separate
// from the FFT code they are used to check.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace big::testing {

inline std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

// Mean-square contribution of bins in [lo, hi] Hz.
inline double naive_band_power(std::span<const double> x, double fs, double lo, double hi) {
  const auto spec = naive_dft(x);
  const std::size_t n = x.size();
  double p = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = fs * static_cast<double>(k) / static_cast<double>(n);
    if (f < lo || f > hi) continue;
    const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
    p += (single ? 1.0 : 2.0) * std::norm(spec[k]);
  }
  return p / static_cast<double>(n * n);
}

// Welch PSD with Hann windows and 50% overlap; returns per-bin power for
// bins 0..seg/2.
inline std::vector<double> welch_psd(std::span<const double> x, std::size_t seg) {
  std::vector<double> psd(seg / 2 + 1, 0.0);
  std::vector<double> w(seg), buf(seg);
  for (std::size_t i = 0; i < seg; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / seg);
  std::size_t count = 0;
  for (std::size_t start = 0; start + seg <= x.size(); start += seg / 2) {
    for (std::size_t i = 0; i < seg; ++i) buf[i] = x[start + i] * w[i];
    const auto spec = naive_dft(buf);
    for (std::size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(spec[k]);
    ++count;
  }
  for (auto& p : psd) p /= static_cast<double>(count);
  return psd;
}

}  // namespace big::testing

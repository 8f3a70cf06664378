#include "big/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>

#include "big/error.hpp"

namespace big::dsp {

namespace {

// FFTW plans are tied to buffers, so each length keeps its own pair of
// buffers and plans. Planning is not thread-safe; the engine is single
// threaded.
struct RealPlan {
  std::size_t n;
  double* real;
  fftw_complex* spec;
  fftw_plan forward;
  fftw_plan inverse;

  explicit RealPlan(std::size_t len) : n(len) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    const int ni = static_cast<int>(n);
    forward = fftw_plan_dft_r2c_1d(ni, real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(ni, spec, real, FFTW_ESTIMATE);
  }
  ~RealPlan() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
    fftw_free(real);
    fftw_free(spec);
  }
  RealPlan(const RealPlan&) = delete;
  RealPlan& operator=(const RealPlan&) = delete;
};

struct ComplexPlan {
  std::size_t n;
  fftw_complex* buf;
  fftw_plan inverse;

  explicit ComplexPlan(std::size_t len) : n(len) {
    buf = fftw_alloc_complex(n);
    inverse = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~ComplexPlan() {
    fftw_destroy_plan(inverse);
    fftw_free(buf);
  }
  ComplexPlan(const ComplexPlan&) = delete;
  ComplexPlan& operator=(const ComplexPlan&) = delete;
};

RealPlan& real_plan(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<RealPlan>> cache;
  auto& p = cache[n];
  if (!p) p = std::make_unique<RealPlan>(n);
  return *p;
}

ComplexPlan& complex_plan(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<ComplexPlan>> cache;
  auto& p = cache[n];
  if (!p) p = std::make_unique<ComplexPlan>(n);
  return *p;
}

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw DimensionError(std::string(what) + ": empty signal");
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  require_nonempty(x.size(), "rfft");
  RealPlan& p = real_plan(x.size());
  std::copy(x.begin(), x.end(), p.real);
  fftw_execute(p.forward);
  std::vector<std::complex<double>> out(p.n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {p.spec[k][0], p.spec[k][1]};
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  require_nonempty(n, "irfft");
  if (spectrum.size() != n / 2 + 1) throw DimensionError("irfft: spectrum length does not match n");
  RealPlan& p = real_plan(n);
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    p.spec[k][0] = spectrum[k].real();
    p.spec[k][1] = spectrum[k].imag();
  }
  fftw_execute(p.inverse);
  std::vector<double> out(p.real, p.real + n);
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  return out;
}

std::vector<std::complex<double>> analytic_signal(std::span<const double> x) {
  const std::size_t n = x.size();
  auto half = rfft(x);
  ComplexPlan& p = complex_plan(n);
  for (std::size_t k = 0; k < n; ++k) p.buf[k][0] = p.buf[k][1] = 0.0;
  // DC and (for even n) Nyquist keep unit weight, positive bins double.
  for (std::size_t k = 0; k < half.size(); ++k) {
    double w = 2.0;
    if (k == 0 || (n % 2 == 0 && k == n / 2)) w = 1.0;
    p.buf[k][0] = w * half[k].real();
    p.buf[k][1] = w * half[k].imag();
  }
  fftw_execute(p.inverse);
  std::vector<std::complex<double>> out(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = {p.buf[t][0] * inv, p.buf[t][1] * inv};
  return out;
}

std::vector<double> brickwall(std::span<const double> x, double sample_rate, double low_hz, double high_hz) {
  const std::size_t n = x.size();
  auto spec = rfft(x);
  const double df = sample_rate / static_cast<double>(n);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = df * static_cast<double>(k);
    if (f < low_hz || f > high_hz) spec[k] = 0.0;
  }
  return irfft(spec, n);
}

double band_power(std::span<const double> x, double sample_rate, double low_hz, double high_hz) {
  const std::size_t n = x.size();
  const auto spec = rfft(x);
  const double df = sample_rate / static_cast<double>(n);
  double p = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = df * static_cast<double>(k);
    if (f < low_hz || f > high_hz) continue;
    // Interior bins stand for a conjugate pair.
    const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
    p += (single ? 1.0 : 2.0) * std::norm(spec[k]);
  }
  return p / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace big::dsp

#pragma once

#include <complex>
#include <span>
#include <vector>

namespace big::dsp {

// Thin wrappers over FFTW with unnormalized forward transforms and inverse
// transforms scaled by 1/n.
std::vector<std::complex<double>> rfft(std::span<const double> x);
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

// Analytic signal x + i*H[x]: negative frequencies zeroed, positive doubled.
std::vector<std::complex<double>> analytic_signal(std::span<const double> x);

// Keeps bins whose frequency lies in [low_hz, high_hz].
std::vector<double> brickwall(std::span<const double> x, double sample_rate, double low_hz, double high_hz);

// Mean power of the bins in [low_hz, high_hz] relative to the signal length
// (Parseval-consistent: summing over all bands gives the mean square).
double band_power(std::span<const double> x, double sample_rate, double low_hz, double high_hz);

}  // namespace big::dsp

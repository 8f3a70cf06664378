#include "big/memory.hpp"

#include <algorithm>
#include <cmath>

#include "big/error.hpp"

namespace big {

HeteroMemory::HeteroMemory(std::size_t labels_, std::size_t dim_, double eta_)
    : labels(labels_), dim(dim_), m(labels_ * dim_, 0.0), eta(eta_) {
  if (labels < 1 || dim < 1) throw ConfigError("memory: labels and dim must be positive");
  if (!(eta >= 0.0)) throw ConfigError("memory: eta must be non-negative");
}

namespace {

double norm(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

void check(const HeteroMemory& mem, std::span<const double> z) {
  if (z.size() != mem.dim) {
    throw DimensionError("memory: latent has " + std::to_string(z.size()) + " entries, expected " +
                         std::to_string(mem.dim));
  }
  for (double v : z)
    if (!std::isfinite(v)) throw NumericError("memory: non-finite latent");
}

}  // namespace

std::vector<double> hetero_recall(const HeteroMemory& mem, std::span<const double> z) {
  check(mem, z);
  std::vector<double> p(mem.labels, 1.0 / static_cast<double>(mem.labels));
  const double n = norm(z);
  if (n == 0.0) return p;
  std::vector<double> a(mem.labels, 0.0);
  for (std::size_t k = 0; k < mem.labels; ++k) {
    double s = 0.0;
    for (std::size_t d = 0; d < mem.dim; ++d) s += mem.m[k * mem.dim + d] * (z[d] / n);
    a[k] = s;
  }
  const double mx = *std::max_element(a.begin(), a.end());
  double total = 0.0;
  for (std::size_t k = 0; k < mem.labels; ++k) total += (p[k] = std::exp(a[k] - mx));
  for (auto& v : p) v /= total;
  return p;
}

void hetero_store(HeteroMemory& mem, std::span<const double> z, int label) {
  check(mem, z);
  if (label < 0 || static_cast<std::size_t>(label) >= mem.labels) {
    throw ConfigError("memory: label " + std::to_string(label) + " out of range");
  }
  const double n = norm(z);
  if (n == 0.0) return;
  const auto r = hetero_recall(mem, z);
  for (std::size_t k = 0; k < mem.labels; ++k) {
    const double err = (static_cast<std::size_t>(label) == k ? 1.0 : 0.0) - r[k];
    for (std::size_t d = 0; d < mem.dim; ++d) mem.m[k * mem.dim + d] += mem.eta * err * (z[d] / n);
  }
  ++mem.store_count;
}

}  // namespace big

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace big {

// Delta-rule heteroassociative store from latent codes to labels. Updated
// locally, never by gradients.
struct HeteroMemory {
  std::size_t labels = 0;
  std::size_t dim = 0;
  std::vector<double> m;  // labels x dim, row-major
  std::uint64_t store_count = 0;
  double eta = 0.01;

  HeteroMemory() = default;
  HeteroMemory(std::size_t labels, std::size_t dim, double eta = 0.01);
};

// softmax(M z / |z|); uniform for a zero vector.
std::vector<double> hetero_recall(const HeteroMemory& mem, std::span<const double> z);

// M += eta (onehot(label) - recall(z)) (z / |z|)^T. A zero-norm z is skipped.
void hetero_store(HeteroMemory& mem, std::span<const double> z, int label);

}  // namespace big

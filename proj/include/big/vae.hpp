#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "big/checkpoint.hpp"
#include "big/tensor.hpp"

namespace big {

struct VaeConfig {
  std::size_t in_channels = 0;  // rows of x~ (bands x EEG channels)
  std::size_t length = 0;       // samples; must be a multiple of 4
  std::size_t latent_dim = 32;
  std::vector<std::size_t> conv_channels{16, 32, 64};
  std::size_t kernel = 7;
  std::size_t lift_channels = 32;  // decoder feature map after the dense lift

  void validate() const;
  // Length of the encoder feature map (three stride-2 convolutions).
  std::size_t feature_length() const;
};

// Batched rows: mu, log_var, z are [N x latent_dim].
struct LatentCode {
  Tensor mu;
  Tensor log_var;
  Tensor z;
};

struct Encoded {
  Tensor features;  // last conv map [N x conv_channels.back() x feature_length]
  LatentCode code;  // z left undefined
};

class Vae {
 public:
  Vae() = default;
  Vae(VaeConfig cfg, std::uint64_t seed);

  const VaeConfig& config() const { return cfg_; }

  // x [N x in_channels x length] or [in_channels x length] (treated as N = 1).
  Encoded encode(const Tensor& x) const;
  // z [N x latent_dim] or [latent_dim] -> [N x in_channels x length].
  Tensor decode(const Tensor& z) const;

  std::vector<NamedTensor> named_parameters(const std::string& prefix = "vae.") const;
  void load_parameters(const Checkpoint& ckpt, const std::string& prefix = "vae.");

  // Encoder conv stages: kernels [C_out x C_in x K], biases [C_out].
  std::vector<Tensor> enc_w, enc_b;
  Tensor mu_w, mu_b, lv_w, lv_b;  // heads [F x D], [D]
  Tensor lift_w, lift_b;          // [D x lift_channels*length/4]
  std::vector<Tensor> dec_w, dec_b;  // transposed kernels [C_in x C_out x 4]

 private:
  VaeConfig cfg_;
};

// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I); row n draws from
// derive_seed(seed, {n}). eps is a constant of the graph.
LatentCode reparameterize(const LatentCode& code, std::uint64_t seed);

// 1/2 sum_d (mu^2 + exp(lv) - 1 - lv), averaged over rows. Scalar.
Tensor kl_divergence(const LatentCode& code);

struct ElboTerms {
  Tensor loss;  // recon + beta * kl
  Tensor recon;
  Tensor kl;
};

ElboTerms elbo_loss(const Tensor& x, const Tensor& x_hat, const LatentCode& code, double beta);

enum class GenerateMode { Prior, Posterior };

GenerateMode parse_generate_mode(const std::string& name);
std::string to_string(GenerateMode m);

struct GeneratedSample {
  Tensor values;             // [in_channels x length]
  std::optional<int> label;  // posterior mode: the source label
};

// Prior mode decodes z ~ N(0, I); posterior mode encodes sources[i % size]
// and decodes a draw of its posterior. Sample i uses derive_seed(seed, {i}).
std::vector<GeneratedSample> generate_samples(const Vae& vae, std::size_t n, GenerateMode mode,
                                              const std::vector<Tensor>& sources,
                                              const std::vector<std::optional<int>>& labels, std::uint64_t seed);

}  // namespace big

#include "big/vae.hpp"

#include <cmath>

#include "big/error.hpp"
#include "big/init.hpp"
#include "big/ops.hpp"
#include "big/rng.hpp"

namespace big {

namespace {

std::size_t conv_out(std::size_t len, std::size_t k, std::size_t stride, std::size_t pad) {
  return (len + 2 * pad - k) / stride + 1;
}

Tensor batched(const Tensor& x, std::size_t rank) {
  if (x.rank() == rank - 1) {
    Shape s{1};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    return ops::reshape(x, s);
  }
  return x;
}

}  // namespace

void VaeConfig::validate() const {
  if (in_channels == 0) throw ConfigError("vae: in_channels must be positive");
  if (latent_dim == 0) throw ConfigError("vae: latent_dim must be positive");
  if (conv_channels.empty()) throw ConfigError("vae: need at least one encoder conv layer");
  for (auto c : conv_channels)
    if (c == 0) throw ConfigError("vae: encoder channel counts must be positive");
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("vae: encoder kernel must be odd");
  if (lift_channels == 0) throw ConfigError("vae: lift_channels must be positive");
  if (length < 4 || length % 4 != 0) {
    throw ConfigError("vae: length " + std::to_string(length) + " must be a positive multiple of 4");
  }
}

std::size_t VaeConfig::feature_length() const {
  std::size_t len = length;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) len = conv_out(len, kernel, 2, kernel / 2);
  return len;
}

Vae::Vae(VaeConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t K = cfg_.kernel, D = cfg_.latent_dim;
  std::size_t cin = cfg_.in_channels;
  std::uint64_t stream = 0;
  for (auto cout : cfg_.conv_channels) {
    enc_w.push_back(glorot_uniform({cout, cin, K}, cin * K, cout * K, derive_seed(seed, {stream++})));
    enc_b.push_back(Tensor::zeros({cout}, true));
    cin = cout;
  }
  const std::size_t F = cin * cfg_.feature_length();
  mu_w = glorot_uniform({F, D}, F, D, derive_seed(seed, {stream++}));
  mu_b = Tensor::zeros({D}, true);
  // Small log-variance head so training starts near unit posterior variance.
  lv_w = glorot_uniform({F, D}, F, D, derive_seed(seed, {stream++}), 0.1);
  lv_b = Tensor::zeros({D}, true);
  const std::size_t lift = cfg_.lift_channels * (cfg_.length / 4);
  lift_w = glorot_uniform({D, lift}, D, lift, derive_seed(seed, {stream++}));
  lift_b = Tensor::zeros({lift}, true);
  const std::size_t mid = std::max<std::size_t>(1, cfg_.lift_channels / 2);
  dec_w.push_back(glorot_uniform({cfg_.lift_channels, mid, 4}, cfg_.lift_channels * 4, mid * 4,
                                 derive_seed(seed, {stream++})));
  dec_b.push_back(Tensor::zeros({mid}, true));
  dec_w.push_back(glorot_uniform({mid, cfg_.in_channels, 4}, mid * 4, cfg_.in_channels * 4,
                                 derive_seed(seed, {stream++})));
  dec_b.push_back(Tensor::zeros({cfg_.in_channels}, true));
}

Encoded Vae::encode(const Tensor& x_in) const {
  const Tensor x = batched(x_in, 3);
  if (x.rank() != 3 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.length) {
    throw ConfigError("vae encode: expected [N x " + std::to_string(cfg_.in_channels) + " x " +
                      std::to_string(cfg_.length) + "], got " + shape_str(x_in.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < enc_w.size(); ++i) {
    h = ops::relu(ops::conv1d(h, enc_w[i], enc_b[i], 2, cfg_.kernel / 2));
  }
  Encoded out;
  out.features = h;
  const std::size_t n = h.dim(0);
  Tensor flat = ops::reshape(h, {n, h.dim(1) * h.dim(2)});
  out.code.mu = ops::add(ops::matmul(flat, mu_w), mu_b);
  out.code.log_var = ops::add(ops::matmul(flat, lv_w), lv_b);
  return out;
}

Tensor Vae::decode(const Tensor& z_in) const {
  const Tensor z = batched(z_in, 2);
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim) {
    throw ConfigError("vae decode: latent has shape " + shape_str(z_in.shape()) + ", expected [N x " +
                      std::to_string(cfg_.latent_dim) + "]");
  }
  const std::size_t n = z.dim(0);
  Tensor h = ops::relu(ops::add(ops::matmul(z, lift_w), lift_b));
  h = ops::reshape(h, {n, cfg_.lift_channels, cfg_.length / 4});
  h = ops::relu(ops::conv1d_transposed(h, dec_w[0], dec_b[0], 2, 1));
  return ops::conv1d_transposed(h, dec_w[1], dec_b[1], 2, 1);
}

std::vector<NamedTensor> Vae::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < enc_w.size(); ++i) {
    out.push_back({prefix + "enc" + std::to_string(i) + ".w", enc_w[i]});
    out.push_back({prefix + "enc" + std::to_string(i) + ".b", enc_b[i]});
  }
  out.push_back({prefix + "mu.w", mu_w});
  out.push_back({prefix + "mu.b", mu_b});
  out.push_back({prefix + "logvar.w", lv_w});
  out.push_back({prefix + "logvar.b", lv_b});
  out.push_back({prefix + "lift.w", lift_w});
  out.push_back({prefix + "lift.b", lift_b});
  for (std::size_t i = 0; i < dec_w.size(); ++i) {
    out.push_back({prefix + "dec" + std::to_string(i) + ".w", dec_w[i]});
    out.push_back({prefix + "dec" + std::to_string(i) + ".b", dec_b[i]});
  }
  return out;
}

void Vae::load_parameters(const Checkpoint& ckpt, const std::string& prefix) {
  assign_from_checkpoint(named_parameters(prefix), ckpt);
}

LatentCode reparameterize(const LatentCode& code, std::uint64_t seed) {
  if (code.mu.shape() != code.log_var.shape()) {
    throw DimensionError("reparameterize: mu " + shape_str(code.mu.shape()) + " vs log_var " +
                         shape_str(code.log_var.shape()));
  }
  const std::size_t d = code.mu.shape().back();
  const std::size_t rows = code.mu.numel() / d;
  std::vector<double> eps(code.mu.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    Rng rng(derive_seed(seed, {r}));
    for (std::size_t j = 0; j < d; ++j) eps[r * d + j] = rng.normal();
  }
  LatentCode out = code;
  const Tensor sigma = ops::exp(ops::scale(code.log_var, 0.5));
  out.z = ops::add(code.mu, ops::mul(sigma, Tensor(code.mu.shape(), std::move(eps))));
  return out;
}

Tensor kl_divergence(const LatentCode& code) {
  const std::size_t rows = code.mu.rank() <= 1 ? 1 : code.mu.numel() / code.mu.shape().back();
  // mu^2 + exp(lv) - 1 - lv
  Tensor t = ops::sub(ops::add(ops::square(code.mu), ops::exp(code.log_var)), code.log_var);
  t = ops::add_scalar(t, -1.0);
  return ops::scale(ops::sum(t), 0.5 / static_cast<double>(rows));
}

ElboTerms elbo_loss(const Tensor& x, const Tensor& x_hat, const LatentCode& code, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("elbo: beta must be non-negative");
  if (x.shape() != x_hat.shape()) {
    throw DimensionError("elbo: target " + shape_str(x.shape()) + " vs reconstruction " + shape_str(x_hat.shape()));
  }
  ElboTerms t;
  t.recon = ops::mse_loss(x_hat, x);
  t.kl = kl_divergence(code);
  t.loss = ops::add(t.recon, ops::scale(t.kl, beta));
  return t;
}

GenerateMode parse_generate_mode(const std::string& name) {
  if (name == "prior") return GenerateMode::Prior;
  if (name == "posterior") return GenerateMode::Posterior;
  throw ConfigError("unknown generation mode '" + name + "' (expected prior or posterior)");
}

std::string to_string(GenerateMode m) { return m == GenerateMode::Prior ? "prior" : "posterior"; }

std::vector<GeneratedSample> generate_samples(const Vae& vae, std::size_t n, GenerateMode mode,
                                              const std::vector<Tensor>& sources,
                                              const std::vector<std::optional<int>>& labels, std::uint64_t seed) {
  const auto& cfg = vae.config();
  if (mode == GenerateMode::Posterior && sources.empty()) {
    throw ConfigError("generate: posterior mode needs at least one source recording");
  }
  std::vector<GeneratedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, {i});
    GeneratedSample g;
    Tensor z;
    if (mode == GenerateMode::Prior) {
      Rng rng(s);
      std::vector<double> v(cfg.latent_dim);
      for (auto& e : v) e = rng.normal();
      z = Tensor({1, cfg.latent_dim}, std::move(v));
    } else {
      const std::size_t src = i % sources.size();
      z = reparameterize(vae.encode(sources[src]).code, s).z;
      if (src < labels.size()) g.label = labels[src];
    }
    const Tensor x = vae.decode(z);
    g.values = ops::reshape(x, {cfg.in_channels, cfg.length}).detach();
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace big

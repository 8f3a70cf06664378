#include "big/classifier.hpp"

#include "big/error.hpp"
#include "big/init.hpp"
#include "big/rng.hpp"

namespace big {

void ClassifierConfig::validate() const {
  if (in_channels == 0) throw ConfigError("classifier: in_channels must be positive");
  if (n_classes < 2) throw ConfigError("classifier: need at least 2 classes");
  if (filters.size() != 3 || kernels.size() != 3) throw ConfigError("classifier: need exactly three conv layers");
  for (std::size_t i = 0; i < 3; ++i)
    if (filters[i] == 0 || kernels[i] == 0) throw ConfigError("classifier: filters and kernels must be positive");
  if (pool1 == 0 || pool2 == 0) throw ConfigError("classifier: pooling windows must be positive");
  if (!(drop >= 0.0 && drop < 1.0)) throw ConfigError("classifier: drop rate must lie in [0, 1)");
  if (length < min_length()) {
    throw ConfigError("classifier: input length " + std::to_string(length) + " is shorter than the minimum " +
                      std::to_string(min_length()) + " required by the pooling stack");
  }
}

std::size_t ClassifierConfig::flat_features() const { return filters[2] * (length / pool1 / pool2); }

Classifier::Classifier(ClassifierConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::size_t cin = cfg_.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t cout = cfg_.filters[i], k = cfg_.kernels[i];
    conv_w.push_back(glorot_uniform({cout, cin, k}, cin * k, cout * k, derive_seed(seed, {i})));
    conv_b.push_back(Tensor::zeros({cout}, true));
    bn_gamma.push_back(Tensor::full({cout}, 1.0, true));
    bn_beta.push_back(Tensor::zeros({cout}, true));
    bn.emplace_back(cout);
    cin = cout;
  }
  const std::size_t f = cfg_.flat_features();
  dense_w = glorot_uniform({f, cfg_.n_classes}, f, cfg_.n_classes, derive_seed(seed, {3}));
  dense_b = Tensor::zeros({cfg_.n_classes}, true);
}

Tensor Classifier::logits(const Tensor& features, bool train, std::uint64_t seed) {
  Tensor x = features;
  if (x.rank() == 2) x = ops::reshape(x, {1, x.dim(0), x.dim(1)});
  if (x.rank() != 3 || x.dim(1) != cfg_.in_channels) {
    throw ConfigError("classifier: expected [N x " + std::to_string(cfg_.in_channels) + " x L] features, got " +
                      shape_str(features.shape()));
  }
  if (x.dim(2) != cfg_.length) {
    if (x.dim(2) < cfg_.min_length()) {
      throw ConfigError("classifier: input length " + std::to_string(x.dim(2)) + " is shorter than the minimum " +
                        std::to_string(cfg_.min_length()));
    }
    throw ConfigError("classifier: input length " + std::to_string(x.dim(2)) + " differs from the configured " +
                      std::to_string(cfg_.length));
  }
  auto block = [&](const Tensor& h, std::size_t i) {
    const std::size_t k = cfg_.kernels[i];
    ops::Conv1dOptions opt;
    opt.pad_left = (k - 1) / 2;
    opt.pad_right = k - 1 - opt.pad_left;
    Tensor y = ops::conv1d(h, conv_w[i], conv_b[i], opt);
    y = ops::batchnorm1d(y, bn_gamma[i], bn_beta[i], bn[i], train);
    return ops::relu(y);
  };
  Tensor h = block(x, 0);
  h = block(h, 1);
  h = ops::avgpool1d(h, cfg_.pool1);
  h = ops::dropout(h, cfg_.drop, train, derive_seed(seed, {0}));
  h = block(h, 2);
  h = ops::avgpool1d(h, cfg_.pool2);
  h = ops::dropout(h, cfg_.drop, train, derive_seed(seed, {1}));
  const std::size_t n = h.dim(0);
  h = ops::reshape(h, {n, h.dim(1) * h.dim(2)});
  return ops::add(ops::matmul(h, dense_w), dense_b);
}

Tensor Classifier::probabilities(const Tensor& features, bool train, std::uint64_t seed) {
  return ops::softmax(logits(features, train, seed));
}

std::vector<NamedTensor> Classifier::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = prefix + "conv" + std::to_string(i) + ".";
    out.push_back({p + "w", conv_w[i]});
    out.push_back({p + "b", conv_b[i]});
    out.push_back({p + "gamma", bn_gamma[i]});
    out.push_back({p + "beta", bn_beta[i]});
  }
  out.push_back({prefix + "dense.w", dense_w});
  out.push_back({prefix + "dense.b", dense_b});
  return out;
}

std::vector<NamedTensor> Classifier::buffers(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = prefix + "conv" + std::to_string(i) + ".";
    const Shape s{bn[i].running_mean.size()};
    out.push_back({p + "running_mean", Tensor(s, bn[i].running_mean)});
    out.push_back({p + "running_var", Tensor(s, bn[i].running_var)});
  }
  return out;
}

void Classifier::load_parameters(const Checkpoint& ckpt, const std::string& prefix) {
  assign_from_checkpoint(named_parameters(prefix), ckpt);
  const auto bufs = buffers(prefix);
  assign_from_checkpoint(bufs, ckpt);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto m = bufs[2 * i].tensor.data(), v = bufs[2 * i + 1].tensor.data();
    bn[i].running_mean.assign(m.begin(), m.end());
    bn[i].running_var.assign(v.begin(), v.end());
  }
}

std::size_t argmax_lowest(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

}  // namespace big

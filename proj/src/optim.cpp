#include "big/optim.hpp"

#include <cmath>

#include "big/error.hpp"

namespace big {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0)) throw ConfigError("adam: learning rate must be non-negative");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0)) throw ConfigError("adam: eps must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      w[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.clear_grad();
  }
}

std::vector<NamedTensor> Adam::moments() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"adam.m." + params_[i].name, Tensor(params_[i].tensor.shape(), m_[i])});
    out.push_back({"adam.v." + params_[i].name, Tensor(params_[i].tensor.shape(), v_[i])});
  }
  return out;
}

void Adam::load_moments(const std::vector<NamedTensor>& moments, std::uint64_t steps) {
  Checkpoint view;
  view.tensors = moments;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (int which = 0; which < 2; ++which) {
      const std::string name = (which == 0 ? "adam.m." : "adam.v.") + params_[i].name;
      const Tensor& src = view.get(name);
      if (src.numel() != params_[i].tensor.numel()) throw ParseError("adam: moment '" + name + "' has wrong size");
      auto& dst = which == 0 ? m_[i] : v_[i];
      std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
  }
  t_ = steps;
}

}  // namespace big

#include "big/iann.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "big/error.hpp"
#include "big/rng.hpp"

namespace big {

void LifParams::validate() const {
  if (!(tau > 0.0)) throw ConfigError("lif: tau must be positive");
  if (!(u_th > u_rest)) throw ConfigError("lif: u_th must exceed u_rest");
  if (!(dt > 0.0) || !(dt < tau)) throw ConfigError("lif: need 0 < dt < tau");
}

LifState lif_rest_state(std::size_t neurons, const LifParams& p) { return LifState{std::vector<double>(neurons, p.u_rest)}; }

std::vector<std::uint8_t> lif_step(LifState& state, const LifParams& p, std::span<const double> current) {
  if (current.size() != state.u.size()) {
    throw DimensionError("lif_step: current has " + std::to_string(current.size()) + " entries for " +
                         std::to_string(state.u.size()) + " neurons");
  }
  const double a = p.dt / p.tau;
  std::vector<std::uint8_t> s(state.u.size(), 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double u = state.u[i] + a * (-(state.u[i] - p.u_rest) + current[i]);
    if (u >= p.u_th) {
      s[i] = 1;
      u = p.u_rest;
    }
    state.u[i] = u;
  }
  return s;
}

Tensor spiking_attention(const Tensor& q_s, const Tensor& k_s, const Tensor& v_s, double threshold, double slope,
                         ops::SpikeForward mode) {
  if (q_s.rank() != 2 || q_s.shape() != k_s.shape() || q_s.shape() != v_s.shape()) {
    throw DimensionError("spiking_attention: Q, K, V must share one [heads x d] shape, got " +
                         shape_str(q_s.shape()) + ", " + shape_str(k_s.shape()) + ", " + shape_str(v_s.shape()));
  }
  Tensor column_sums = ops::sum_axis(ops::mul(q_s, k_s), 0, true);  // [1 x d]
  Tensor g = ops::spike_fn(column_sums, threshold, slope, mode);
  return ops::mul(g, v_s);
}

DriveMode parse_drive_mode(const std::string& name) {
  if (name == "cumulative") return DriveMode::Cumulative;
  if (name == "instantaneous") return DriveMode::Instantaneous;
  throw ConfigError("unknown drive mode '" + name + "' (expected cumulative or instantaneous)");
}

std::string to_string(DriveMode m) { return m == DriveMode::Cumulative ? "cumulative" : "instantaneous"; }

std::vector<std::size_t> IannConfig::layer_widths() const {
  if (!widths.empty()) return widths;
  return {4 * channels, 4 * channels, 2 * channels, 2 * channels, channels};
}

void IannConfig::validate() const {
  if (channels == 0) throw ConfigError("iann: channels must be positive");
  lif.validate();
  if (heads == 0) throw ConfigError("iann: heads must be positive");
  if (!(surrogate_slope > 0.0)) throw ConfigError("iann: surrogate slope must be positive");
  if (readout_window == 0) throw ConfigError("iann: readout window must be positive");
  const auto w = layer_widths();
  if (w.empty()) throw ConfigError("iann: need at least one layer");
  for (std::size_t r = 0; r < w.size(); ++r) {
    if (w[r] == 0 || w[r] % heads != 0) {
      throw ConfigError("iann: layer " + std::to_string(r) + " width " + std::to_string(w[r]) +
                        " is not a positive multiple of the head count " + std::to_string(heads));
    }
  }
  if (w.back() != channels) {
    throw ConfigError("iann: last layer width " + std::to_string(w.back()) + " must equal the channel count " +
                      std::to_string(channels));
  }
}

namespace {

double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

struct Threshold {
  double slope;
  bool hard;
  double fire(double x, double th) const { return hard ? (x >= th ? 1.0 : 0.0) : logistic(slope * (x - th)); }
  double deriv(double x, double th) const { return ops::sigmoid_surrogate(x, th, slope); }
};

// Pre-activations saved by the forward pass for the backward sweep.
struct LayerTrace {
  std::vector<double> upre, qp, kp, vp, cs;
};

// out[k] += sum_i a[i] * m[i, k], skipping zero a[i]. Returns the number of
// nonzero rows used.
std::size_t row_combine(const double* a, std::size_t rows, const double* m, std::size_t cols, double* out) {
  std::size_t used = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    ++used;
    const double* mi = m + i * cols;
    if (ai == 1.0) {
      for (std::size_t k = 0; k < cols; ++k) out[k] += mi[k];
    } else {
      for (std::size_t k = 0; k < cols; ++k) out[k] += ai * mi[k];
    }
  }
  return used;
}

// out[i] = sum_k m[i, k] * g[k]
void mat_vec(const double* m, std::size_t rows, std::size_t cols, const double* g, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* mi = m + i * cols;
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += mi[k] * g[k];
    out[i] = acc;
  }
}

}  // namespace

Tensor iann_layer_forward(const Tensor& x, const IannLayer& layer, const IannConfig& cfg) {
  if (x.rank() != 3) throw DimensionError("iann layer: expected [N x T x fan_in] spikes, got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), steps = x.dim(1), nin = x.dim(2);
  if (layer.w.rank() != 2 || layer.w.dim(0) != nin) {
    throw ConfigError("iann layer: weights " + shape_str(layer.w.shape()) + " do not accept fan-in " +
                      std::to_string(nin));
  }
  const std::size_t n = layer.w.dim(1);
  const Shape sq{n, n};
  if (layer.wq.shape() != sq || layer.wk.shape() != sq || layer.wv.shape() != sq) {
    throw ConfigError("iann layer: attention projections must be " + shape_str(sq));
  }
  if (n % cfg.heads != 0) throw ConfigError("iann layer: width not divisible by head count");
  const std::size_t d = n / cfg.heads, heads = cfg.heads;
  const double a = cfg.lif.dt / cfg.lif.tau;
  const double u_rest = cfg.lif.u_rest, u_th = cfg.lif.u_th;
  const double theta = u_th - u_rest;  // attention units fire from rest
  const Threshold f{cfg.surrogate_slope, cfg.forward_mode == ops::SpikeForward::Hard};
  const bool cumulative = cfg.drive == DriveMode::Cumulative;

  const auto xd = x.data();
  const double* W = layer.w.data().data();
  const double* Wq = layer.wq.data().data();
  const double* Wk = layer.wk.data().data();
  const double* Wv = layer.wv.data().data();

  auto trace = std::make_shared<LayerTrace>();
  trace->upre.resize(batch * steps * n);
  trace->qp.resize(batch * steps * n);
  trace->kp.resize(batch * steps * n);
  trace->vp.resize(batch * steps * n);
  trace->cs.resize(batch * steps * d);
  std::vector<double> out(batch * steps * n);

  std::vector<double> u(n), c(nin), I(n), s(n), Q(n), K(n), V(n);
  std::uint64_t drive_terms = 0, proj_terms = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(u.begin(), u.end(), u_rest);
    std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t row = b * steps + t;
      const double* xt = xd.data() + row * nin;
      if (cumulative) {
        for (std::size_t j = 0; j < nin; ++j) c[j] += xt[j];
      } else {
        std::copy(xt, xt + nin, c.begin());
      }
      std::fill(I.begin(), I.end(), 0.0);
      drive_terms += row_combine(c.data(), nin, W, n, I.data());

      double* upre = trace->upre.data() + row * n;
      for (std::size_t i = 0; i < n; ++i) {
        upre[i] = (1.0 - a) * u[i] + a * u_rest + a * I[i];
        s[i] = f.fire(upre[i], u_th);
        u[i] = upre[i] * (1.0 - s[i]) + u_rest * s[i];
      }

      double* qp = trace->qp.data() + row * n;
      double* kp = trace->kp.data() + row * n;
      double* vp = trace->vp.data() + row * n;
      std::fill(qp, qp + n, 0.0);
      std::fill(kp, kp + n, 0.0);
      std::fill(vp, vp + n, 0.0);
      proj_terms += row_combine(s.data(), n, Wq, n, qp);
      row_combine(s.data(), n, Wk, n, kp);
      row_combine(s.data(), n, Wv, n, vp);
      for (std::size_t i = 0; i < n; ++i) {
        Q[i] = f.fire(qp[i], theta);
        K[i] = f.fire(kp[i], theta);
        V[i] = f.fire(vp[i], theta);
      }
      double* cs = trace->cs.data() + row * d;
      double* o = out.data() + row * n;
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t h = 0; h < heads; ++h) acc += Q[h * d + j] * K[h * d + j];
        cs[j] = acc;
        const double g = f.fire(acc, theta);
        for (std::size_t h = 0; h < heads; ++h) o[h * d + j] = g * V[h * d + j];
      }
    }
  }
  // Binary operands make every product an addition.
  if (cumulative) {
    detail::count_macs(drive_terms * n);
  } else {
    detail::count_accumulates(drive_terms * n);
  }
  detail::count_accumulates(3 * proj_terms * n);
  detail::count_other(batch * steps * (3 * n + heads * d));

  Tensor result({batch, steps, n}, std::move(out));
  if (!detail::needs_record({&x, &layer.w, &layer.wq, &layer.wk, &layer.wv})) return result;

  const IannLayer L = layer;
  active_tape()->record("iann_layer", {x, L.w, L.wq, L.wk, L.wv}, result,
                        [x, L, result, trace, batch, steps, nin, n, d, heads, a, u_rest, u_th, theta, f, cumulative]() {
    const auto go_all = result.grad();
    const auto xd = x.data();
    const double* W = L.w.data().data();
    const double* Wq = L.wq.data().data();
    const double* Wk = L.wk.data().data();
    const double* Wv = L.wv.data().data();
    const bool need_x = x.requires_grad();
    std::vector<double> gW(nin * n, 0.0), gWq(n * n, 0.0), gWk(n * n, 0.0), gWv(n * n, 0.0);
    std::vector<double> gX(need_x ? xd.size() : 0, 0.0);
    std::vector<double> gu(n), gcarry(nin), c(nin), s(n), Q(n), K(n), V(n), gqp(n), gkp(n), gvp(n), gs(n),
        gI(n), gct(nin), tmp(n), gcs(d);
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(gu.begin(), gu.end(), 0.0);
      std::fill(gcarry.begin(), gcarry.end(), 0.0);
      std::fill(c.begin(), c.end(), 0.0);
      if (cumulative) {
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t j = 0; j < nin; ++j) c[j] += xd[(b * steps + t) * nin + j];
      }
      for (std::size_t t = steps; t-- > 0;) {
        const std::size_t row = b * steps + t;
        const double* xt = xd.data() + row * nin;
        if (!cumulative) std::copy(xt, xt + nin, c.begin());
        const double* upre = trace->upre.data() + row * n;
        const double* qp = trace->qp.data() + row * n;
        const double* kp = trace->kp.data() + row * n;
        const double* vp = trace->vp.data() + row * n;
        const double* cs = trace->cs.data() + row * d;
        const double* go = go_all.data() + row * n;
        for (std::size_t i = 0; i < n; ++i) {
          s[i] = f.fire(upre[i], u_th);
          Q[i] = f.fire(qp[i], theta);
          K[i] = f.fire(kp[i], theta);
          V[i] = f.fire(vp[i], theta);
        }
        // o[h, j] = g_j V[h, j],  g_j = SN(sum_h Q[h, j] K[h, j])
        for (std::size_t j = 0; j < d; ++j) {
          const double g = f.fire(cs[j], theta);
          double gg = 0.0;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t i = h * d + j;
            gg += go[i] * V[i];
            gvp[i] = go[i] * g == 0.0 ? 0.0 : go[i] * g * f.deriv(vp[i], theta);
          }
          gcs[j] = gg == 0.0 ? 0.0 : gg * f.deriv(cs[j], theta);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t i = h * d + j;
            gqp[i] = gcs[j] * K[i] == 0.0 ? 0.0 : gcs[j] * K[i] * f.deriv(qp[i], theta);
            gkp[i] = gcs[j] * Q[i] == 0.0 ? 0.0 : gcs[j] * Q[i] * f.deriv(kp[i], theta);
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (s[i] == 0.0) continue;
          double* rq = gWq.data() + i * n;
          double* rk = gWk.data() + i * n;
          double* rv = gWv.data() + i * n;
          for (std::size_t k = 0; k < n; ++k) {
            rq[k] += s[i] * gqp[k];
            rk[k] += s[i] * gkp[k];
            rv[k] += s[i] * gvp[k];
          }
        }
        mat_vec(Wq, n, n, gqp.data(), gs.data());
        mat_vec(Wk, n, n, gkp.data(), tmp.data());
        for (std::size_t i = 0; i < n; ++i) gs[i] += tmp[i];
        mat_vec(Wv, n, n, gvp.data(), tmp.data());
        for (std::size_t i = 0; i < n; ++i) gs[i] += tmp[i];

        // u = upre (1 - s) + u_rest s,  s = H(upre - u_th),
        // upre = (1 - a) u_prev + a u_rest + a I
        for (std::size_t i = 0; i < n; ++i) {
          gs[i] += gu[i] * (u_rest - upre[i]);
          const double gpre = gu[i] * (1.0 - s[i]) + (gs[i] == 0.0 ? 0.0 : gs[i] * f.deriv(upre[i], u_th));
          gI[i] = a * gpre;
          gu[i] = (1.0 - a) * gpre;
        }
        for (std::size_t j = 0; j < nin; ++j) {
          if (c[j] == 0.0) continue;
          double* rw = gW.data() + j * n;
          for (std::size_t k = 0; k < n; ++k) rw[k] += c[j] * gI[k];
        }
        if (need_x) {
          mat_vec(W, nin, n, gI.data(), gct.data());
          double* gx = gX.data() + row * nin;
          if (cumulative) {
            // c(t) = c(t-1) + x(t): x(t) collects the gradient of every c(t' >= t).
            for (std::size_t j = 0; j < nin; ++j) {
              gcarry[j] += gct[j];
              gx[j] = gcarry[j];
            }
          } else {
            std::copy(gct.begin(), gct.end(), gx);
          }
        }
        if (cumulative)
          for (std::size_t j = 0; j < nin; ++j) c[j] -= xt[j];
      }
    }
    detail::accumulate(L.w, gW);
    detail::accumulate(L.wq, gWq);
    detail::accumulate(L.wk, gWk);
    detail::accumulate(L.wv, gWv);
    if (need_x) detail::accumulate(x, gX);
  });
  return result;
}

Tensor spike_rate_readout(const Tensor& spikes, std::size_t window, std::size_t stride) {
  if (spikes.rank() != 3) throw DimensionError("readout: expected [N x T x n], got " + shape_str(spikes.shape()));
  if (window == 0 || stride == 0) throw ConfigError("readout: window and stride must be positive");
  const std::size_t batch = spikes.dim(0), steps = spikes.dim(1), n = spikes.dim(2);
  if (steps % stride != 0) {
    throw DimensionError("readout: " + std::to_string(steps) + " steps is not a multiple of stride " +
                         std::to_string(stride));
  }
  const std::size_t len = steps / stride;
  const double inv = 1.0 / static_cast<double>(window);
  const auto sd = spikes.data();
  std::vector<double> y(batch * n * len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t end = l * stride + stride;  // exclusive
      const std::size_t begin = end > window ? end - window : 0;
      for (std::size_t t = begin; t < end; ++t) {
        const double* st = sd.data() + (b * steps + t) * n;
        for (std::size_t i = 0; i < n; ++i) y[(b * n + i) * len + l] += st[i] * inv;
      }
    }
  }
  detail::count_other(batch * n * len * window);
  Tensor out({batch, n, len}, std::move(y));
  if (!detail::needs_record({&spikes})) return out;
  active_tape()->record("spike_rate_readout", {spikes}, out, [spikes, out, batch, steps, n, len, window, stride, inv]() {
    const auto g = out.grad();
    std::vector<double> gs(spikes.numel(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t end = l * stride + stride;
        const std::size_t begin = end > window ? end - window : 0;
        for (std::size_t t = begin; t < end; ++t)
          for (std::size_t i = 0; i < n; ++i) gs[(b * steps + t) * n + i] += g[(b * n + i) * len + l] * inv;
      }
    }
    detail::accumulate(spikes, gs);
  });
  return out;
}

Tensor spike_trains_to_tensor(std::span<const SpikeTrain> trains) {
  if (trains.empty()) throw DimensionError("spike_trains_to_tensor: no trains");
  const std::size_t n = trains[0].neurons, steps = trains[0].steps;
  std::vector<double> v(trains.size() * steps * n);
  for (std::size_t b = 0; b < trains.size(); ++b) {
    if (trains[b].neurons != n || trains[b].steps != steps) {
      throw DimensionError("spike_trains_to_tensor: trains differ in shape");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < steps; ++t) v[(b * steps + t) * n + i] = trains[b].at(i, t);
  }
  return Tensor({trains.size(), steps, n}, std::move(v));
}

Iann::Iann(IannConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto widths = cfg_.layer_widths();
  std::size_t fan_in = cfg_.channels;
  auto init = [&](std::size_t rows, std::size_t cols, std::uint64_t stream, double gain) {
    Rng rng(stream);
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (auto& e : v) e = rng.uniform(-bound, bound);
    return Tensor({rows, cols}, std::move(v), true);
  };
  for (std::size_t r = 0; r < widths.size(); ++r) {
    IannLayer layer;
    layer.w = init(fan_in, widths[r], derive_seed(seed, {r, 0}), cfg_.init_gain);
    layer.wq = init(widths[r], widths[r], derive_seed(seed, {r, 1}), cfg_.attention_gain);
    layer.wk = init(widths[r], widths[r], derive_seed(seed, {r, 2}), cfg_.attention_gain);
    layer.wv = init(widths[r], widths[r], derive_seed(seed, {r, 3}), cfg_.attention_gain);
    layers_.push_back(std::move(layer));
    fan_in = widths[r];
  }
}

Tensor Iann::forward(const Tensor& spikes, std::size_t steps_per_sample, std::vector<Tensor>* activity) const {
  if (spikes.rank() != 3 || spikes.dim(2) != cfg_.channels) {
    throw ConfigError("iann: expected [N x T x " + std::to_string(cfg_.channels) + "] spikes, got " +
                      shape_str(spikes.shape()));
  }
  Tensor h = spikes;
  for (const auto& layer : layers_) {
    h = iann_layer_forward(h, layer, cfg_);
    if (activity) activity->push_back(h);
  }
  return spike_rate_readout(h, cfg_.readout_window, steps_per_sample);
}

std::vector<NamedTensor> Iann::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t r = 0; r < layers_.size(); ++r) {
    const std::string p = prefix + "l" + std::to_string(r) + ".";
    out.push_back({p + "w", layers_[r].w});
    out.push_back({p + "wq", layers_[r].wq});
    out.push_back({p + "wk", layers_[r].wk});
    out.push_back({p + "wv", layers_[r].wv});
  }
  return out;
}

void Iann::load_parameters(const Checkpoint& ckpt, const std::string& prefix) {
  assign_from_checkpoint(named_parameters(prefix), ckpt);
}

Tensor iann_forward(const Iann& net, const SpikeTrain& spikes) {
  spikes.validate();
  const SpikeTrain one[] = {spikes};
  Tensor x = net.forward(spike_trains_to_tensor(one), spikes.steps_per_sample);
  return ops::reshape(x, {x.dim(1), x.dim(2)});
}

}  // namespace big

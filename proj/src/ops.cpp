#include "big/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "big/error.hpp"
#include "big/rng.hpp"

namespace big::ops {

using detail::accumulate;
using detail::needs_record;

namespace {

void record(const char* op, std::vector<Tensor> inputs, const Tensor& out, Tape::BackwardFn fn) {
  active_tape()->record(op, std::move(inputs), out, std::move(fn));
}

// ---- broadcasting -----------------------------------------------------------

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;  // zero on broadcast axes
  std::vector<std::size_t> b_strides;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
  BroadcastPlan p;
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(pa[i], pb[i]);
  }
  auto sa = contiguous_strides(pa);
  auto sb = contiguous_strides(pb);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] == 1) sa[i] = 0;
    if (pb[i] == 1) sb[i] = 0;
  }
  p.a_strides = std::move(sa);
  p.b_strides = std::move(sb);
  return p;
}

template <typename Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
  const std::size_t r = p.out.size();
  const std::size_t n = shape_numel(p.out);
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += p.a_strides[d];
      ib += p.b_strides[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.a_strides[d] * idx[d];
      ib -= p.b_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp kind, const char* name) {
  const auto ad = a.data();
  const auto bd = b.data();
  Tensor out;
  const bool same = a.shape() == b.shape();
  if (same) {
    std::vector<double> y(ad.size());
    switch (kind) {
      case BinOp::Add:
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] + bd[i];
        break;
      case BinOp::Sub:
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] - bd[i];
        break;
      case BinOp::Mul:
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * bd[i];
        break;
    }
    out = Tensor(a.shape(), std::move(y));
  } else {
    auto plan = plan_broadcast(a.shape(), b.shape(), name);
    std::vector<double> y(shape_numel(plan.out));
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinOp::Add: y[o] = ad[ia] + bd[ib]; break;
        case BinOp::Sub: y[o] = ad[ia] - bd[ib]; break;
        case BinOp::Mul: y[o] = ad[ia] * bd[ib]; break;
      }
    });
    out = Tensor(plan.out, std::move(y));
  }
  if (!needs_record({&a, &b})) return out;
  record(name, {a, b}, out, [a, b, out, kind, same, name]() {
    const auto g = out.grad();
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> ga(a.requires_grad() ? ad.size() : 0, 0.0);
    std::vector<double> gb(b.requires_grad() ? bd.size() : 0, 0.0);
    auto step = [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinOp::Add:
          if (!ga.empty()) ga[ia] += g[o];
          if (!gb.empty()) gb[ib] += g[o];
          break;
        case BinOp::Sub:
          if (!ga.empty()) ga[ia] += g[o];
          if (!gb.empty()) gb[ib] -= g[o];
          break;
        case BinOp::Mul:
          if (!ga.empty()) ga[ia] += g[o] * bd[ib];
          if (!gb.empty()) gb[ib] += g[o] * ad[ia];
          break;
      }
    };
    if (same) {
      for (std::size_t o = 0; o < g.size(); ++o) step(o, o, o);
    } else {
      for_each_broadcast(plan_broadcast(a.shape(), b.shape(), name), step);
    }
    if (!ga.empty()) accumulate(a, ga);
    if (!gb.empty()) accumulate(b, gb);
  });
  return out;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  const auto ad = a.data();
  std::vector<double> y(ad.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(ad[i]);
  Tensor out(a.shape(), std::move(y));
  if (!needs_record({&a})) return out;
  // deriv(x, y) -> dy/dx
  record(name, {a}, out, [a, out, deriv]() {
    const auto g = out.grad();
    const auto x = a.data();
    const auto y = out.data();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * deriv(x[i], y[i]);
    accumulate(a, ga);
  });
  return out;
}

// Splits a shape at `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Views [C x L] as [1 x C x L].
struct Batched {
  std::size_t n, c, l;
  bool was_2d;
};

Batched as_batched(const Tensor& x, const char* op) {
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1), true};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2), false};
  throw DimensionError(std::string(op) + ": expected [C x L] or [N x C x L], got " + shape_str(x.shape()));
}

Shape batched_shape(const Batched& b, std::size_t c, std::size_t l) {
  return b.was_2d ? Shape{c, l} : Shape{b.n, c, l};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& a) {
  detail::count_other(a.numel());
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  const auto ad = a.data();
  double s = 0.0;
  for (double v : ad) s += v;
  Tensor out = Tensor::scalar(s);
  if (!needs_record({&a})) return out;
  record("sum", {a}, out, [a, out]() {
    std::vector<double> ga(a.numel(), out.grad()[0]);
    accumulate(a, ga);
  });
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  const auto sp = split_axis(a.shape(), axis, "sum_axis");
  const auto ad = a.data();
  std::vector<double> y(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t e = 0; e < sp.extent; ++e) {
      const double* src = &ad[(o * sp.extent + e) * sp.inner];
      double* dst = &y[o * sp.inner];
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  Shape s = a.shape();
  if (keepdim) {
    s[axis] = 1;
  } else {
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
    if (s.empty()) s = {1};
  }
  Tensor out(std::move(s), std::move(y));
  if (!needs_record({&a})) return out;
  record("sum_axis", {a}, out, [a, out, sp]() {
    const auto g = out.grad();
    std::vector<double> ga(a.numel());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t e = 0; e < sp.extent; ++e)
        for (std::size_t i = 0; i < sp.inner; ++i) ga[(o * sp.extent + e) * sp.inner + i] = g[o * sp.inner + i];
    accumulate(a, ga);
  });
  return out;
}

Tensor cumsum(const Tensor& a, std::size_t axis) {
  const auto sp = split_axis(a.shape(), axis, "cumsum");
  const auto ad = a.data();
  std::vector<double> y(ad.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double run = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const std::size_t k = (o * sp.extent + e) * sp.inner + i;
        run += ad[k];
        y[k] = run;
      }
    }
  Tensor out(a.shape(), std::move(y));
  if (!needs_record({&a})) return out;
  record("cumsum", {a}, out, [a, out, sp]() {
    const auto g = out.grad();
    std::vector<double> ga(g.size());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        double run = 0.0;
        for (std::size_t e = sp.extent; e-- > 0;) {
          const std::size_t k = (o * sp.extent + e) * sp.inner + i;
          run += g[k];
          ga[k] = run;
        }
      }
    accumulate(a, ga);
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (!needs_record({&a})) return out;
  record("reshape", {a}, out, [a, out]() { accumulate(a, out.grad()); });
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) ok = false;
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " does not conform to " + shape_str(s0));
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  const auto sp = split_axis(os, axis, "concat");
  std::vector<double> y(shape_numel(os));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.dim(axis);
    const auto pd = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(&pd[o * e * sp.inner], e * sp.inner, &y[(o * sp.extent + offset) * sp.inner]);
    offset += e;
  }
  Tensor out(os, std::move(y));
  bool any = false;
  for (const auto& p : parts) any = any || needs_record({&p});
  if (!any) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  record("concat", inputs, out, [inputs, out, sp]() {
    const auto g = out.grad();
    std::size_t offset = 0;
    for (const auto& p : inputs) {
      const std::size_t ext = p.numel() / (sp.outer * sp.inner);
      if (p.requires_grad()) {
        std::vector<double> gp(p.numel());
        for (std::size_t o = 0; o < sp.outer; ++o)
          std::copy_n(&g[(o * sp.extent + offset) * sp.inner], ext * sp.inner, &gp[o * ext * sp.inner]);
        accumulate(p, gp);
      }
      offset += ext;
    }
  });
  return out;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const auto sp = split_axis(a.shape(), axis, "slice");
  if (length == 0 || start + length > sp.extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of extent " + std::to_string(sp.extent));
  }
  const auto ad = a.data();
  Shape os = a.shape();
  os[axis] = length;
  std::vector<double> y(shape_numel(os));
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(&ad[(o * sp.extent + start) * sp.inner], length * sp.inner, &y[o * length * sp.inner]);
  Tensor out(os, std::move(y));
  if (!needs_record({&a})) return out;
  record("slice", {a}, out, [a, out, sp, start, length]() {
    const auto g = out.grad();
    std::vector<double> ga(a.numel(), 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(&g[o * length * sp.inner], length * sp.inner, &ga[(o * sp.extent + start) * sp.inner]);
    accumulate(a, ga);
  });
  return out;
}

Tensor index_select(const Tensor& a, std::size_t axis, std::span<const std::size_t> index) {
  const auto sp = split_axis(a.shape(), axis, "index_select");
  for (std::size_t i : index)
    if (i >= sp.extent) throw DimensionError("index_select: index " + std::to_string(i) + " out of range");
  if (index.empty()) throw DimensionError("index_select: empty index");
  std::vector<std::size_t> idx(index.begin(), index.end());
  const auto ad = a.data();
  Shape os = a.shape();
  os[axis] = idx.size();
  std::vector<double> y(shape_numel(os));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < idx.size(); ++j)
      std::copy_n(&ad[(o * sp.extent + idx[j]) * sp.inner], sp.inner, &y[(o * idx.size() + j) * sp.inner]);
  Tensor out(os, std::move(y));
  if (!needs_record({&a})) return out;
  record("index_select", {a}, out, [a, out, sp, idx]() {
    const auto g = out.grad();
    std::vector<double> ga(a.numel(), 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t j = 0; j < idx.size(); ++j)
        for (std::size_t i = 0; i < sp.inner; ++i)
          ga[(o * sp.extent + idx[j]) * sp.inner + i] += g[(o * idx.size() + j) * sp.inner + i];
    accumulate(a, ga);
  });
  return out;
}

// ---- matmul -----------------------------------------------------------------

namespace {

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool sparse_lhs) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not conform");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> c(m * n, 0.0);
  std::uint64_t nnz = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = &c[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (sparse_lhs && av == 0.0) continue;
      ++nnz;
      const double* bp = &bd[p * n];
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  if (sparse_lhs) {
    detail::count_accumulates(nnz * n);
  } else {
    detail::count_macs(static_cast<std::uint64_t>(m) * k * n);
  }
  Tensor out({m, n}, std::move(c));
  if (!needs_record({&a, &b})) return out;
  record(sparse_lhs ? "spike_matmul" : "matmul", {a, b}, out, [a, b, out, m, k, n, sparse_lhs]() {
    const auto g = out.grad();
    const auto ad = a.data();
    const auto bd = b.data();
    if (a.requires_grad()) {
      std::vector<double> ga(m * k);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* gi = &g[i * n];
          const double* bp = &bd[p * n];
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
          ga[i * k + p] = s;
        }
      accumulate(a, ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(k * n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double* gi = &g[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ad[i * k + p];
          if (sparse_lhs && av == 0.0) continue;
          double* gp = &gb[p * n];
          for (std::size_t j = 0; j < n; ++j) gp[j] += av * gi[j];
        }
      }
      accumulate(b, gb);
    }
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }
Tensor spike_matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }

// ---- convolution ------------------------------------------------------------

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, const Conv1dOptions& opt) {
  const Batched x = as_batched(input, "conv1d");
  if (kernels.rank() != 3) throw DimensionError("conv1d: kernels must be [C_out x C_in/groups x K], got " +
                                                shape_str(kernels.shape()));
  const std::size_t cout = kernels.dim(0), cin_g = kernels.dim(1), kw = kernels.dim(2);
  const std::size_t groups = opt.groups;
  if (groups == 0 || opt.stride == 0) throw ConfigError("conv1d: stride and groups must be positive");
  if (x.c % groups != 0 || cout % groups != 0 || x.c / groups != cin_g) {
    throw DimensionError("conv1d: input " + shape_str(input.shape()) + " incompatible with kernels " +
                         shape_str(kernels.shape()) + " and groups " + std::to_string(groups));
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) +
                         " output channels");
  }
  const std::size_t lp = x.l + opt.pad_left + opt.pad_right;
  if (kw > lp) {
    throw ConfigError("conv1d: kernel length " + std::to_string(kw) + " exceeds padded input length " +
                      std::to_string(lp));
  }
  const std::size_t lout = (lp - kw) / opt.stride + 1;
  const std::size_t stride = opt.stride;
  const std::size_t cout_g = cout / groups;

  // Zero-padded copy so every tap executes; the executed work then equals the
  // analytic C_out * C_in/groups * K * L_out exactly.
  const auto xd = input.data();
  std::vector<double> xp(x.n * x.c * lp, 0.0);
  for (std::size_t b = 0; b < x.n * x.c; ++b) std::copy_n(&xd[b * x.l], x.l, &xp[b * lp + opt.pad_left]);

  const auto wd = kernels.data();
  const auto bd = bias.data();
  std::vector<double> y(x.n * cout * lout);
  for (std::size_t b = 0; b < x.n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      double* yo = &y[(b * cout + co) * lout];
      std::fill_n(yo, lout, bd[co]);
      const std::size_t g = co / cout_g;
      for (std::size_t ci = 0; ci < cin_g; ++ci) {
        const double* xrow = &xp[(b * x.c + g * cin_g + ci) * lp];
        const double* wrow = &wd[(co * cin_g + ci) * kw];
        for (std::size_t k = 0; k < kw; ++k) {
          const double w = wrow[k];
          const double* xs = xrow + k;
          if (stride == 1) {
            for (std::size_t t = 0; t < lout; ++t) yo[t] += w * xs[t];
          } else {
            for (std::size_t t = 0; t < lout; ++t) yo[t] += w * xs[t * stride];
          }
        }
      }
    }
  detail::count_macs(static_cast<std::uint64_t>(x.n) * cout * cin_g * kw * lout);
  Tensor out(batched_shape(x, cout, lout), std::move(y));
  if (!needs_record({&input, &kernels, &bias})) return out;
  record("conv1d", {input, kernels, bias}, out,
         [input, kernels, bias, out, x, xp = std::move(xp), cout, cin_g, kw, lout, lp, stride, cout_g, opt]() {
           const auto g = out.grad();
           const auto wd = kernels.data();
           if (bias.requires_grad()) {
             std::vector<double> gb(cout, 0.0);
             for (std::size_t b = 0; b < x.n; ++b)
               for (std::size_t co = 0; co < cout; ++co)
                 for (std::size_t t = 0; t < lout; ++t) gb[co] += g[(b * cout + co) * lout + t];
             accumulate(bias, gb);
           }
           if (kernels.requires_grad()) {
             std::vector<double> gw(kernels.numel(), 0.0);
             for (std::size_t b = 0; b < x.n; ++b)
               for (std::size_t co = 0; co < cout; ++co) {
                 const double* go = &g[(b * cout + co) * lout];
                 const std::size_t grp = co / cout_g;
                 for (std::size_t ci = 0; ci < cin_g; ++ci) {
                   const double* xrow = &xp[(b * x.c + grp * cin_g + ci) * lp];
                   double* gwrow = &gw[(co * cin_g + ci) * kw];
                   for (std::size_t k = 0; k < kw; ++k) {
                     double s = 0.0;
                     for (std::size_t t = 0; t < lout; ++t) s += go[t] * xrow[t * stride + k];
                     gwrow[k] += s;
                   }
                 }
               }
             accumulate(kernels, gw);
           }
           if (input.requires_grad()) {
             std::vector<double> gxp(x.n * x.c * lp, 0.0);
             for (std::size_t b = 0; b < x.n; ++b)
               for (std::size_t co = 0; co < cout; ++co) {
                 const double* go = &g[(b * cout + co) * lout];
                 const std::size_t grp = co / cout_g;
                 for (std::size_t ci = 0; ci < cin_g; ++ci) {
                   double* gxrow = &gxp[(b * x.c + grp * cin_g + ci) * lp];
                   const double* wrow = &wd[(co * cin_g + ci) * kw];
                   for (std::size_t k = 0; k < kw; ++k) {
                     const double w = wrow[k];
                     for (std::size_t t = 0; t < lout; ++t) gxrow[t * stride + k] += w * go[t];
                   }
                 }
               }
             std::vector<double> gx(x.n * x.c * x.l);
             for (std::size_t r = 0; r < x.n * x.c; ++r) std::copy_n(&gxp[r * lp + opt.pad_left], x.l, &gx[r * x.l]);
             accumulate(input, gx);
           }
         });
  return out;
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  return conv1d(input, kernels, bias, Conv1dOptions{stride, padding, padding, 1});
}

Tensor conv1d_transposed(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                         std::size_t padding) {
  const Batched x = as_batched(input, "conv1d_transposed");
  if (kernels.rank() != 3 || kernels.dim(0) != x.c) {
    throw DimensionError("conv1d_transposed: kernels " + shape_str(kernels.shape()) + " do not match input " +
                         shape_str(input.shape()));
  }
  if (stride == 0) throw ConfigError("conv1d_transposed: stride must be positive");
  const std::size_t cin = x.c, cout = kernels.dim(1), kw = kernels.dim(2);
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("conv1d_transposed: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  const std::size_t lfull = (x.l - 1) * stride + kw;
  if (lfull <= 2 * padding) {
    throw ConfigError("conv1d_transposed: padding " + std::to_string(padding) + " leaves no output samples");
  }
  const std::size_t lout = lfull - 2 * padding;
  const auto xd = input.data();
  const auto wd = kernels.data();
  const auto bd = bias.data();
  std::vector<double> full(x.n * cout * lfull, 0.0);
  for (std::size_t b = 0; b < x.n; ++b)
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xrow = &xd[(b * cin + ci) * x.l];
      for (std::size_t co = 0; co < cout; ++co) {
        double* frow = &full[(b * cout + co) * lfull];
        const double* wrow = &wd[(ci * cout + co) * kw];
        for (std::size_t k = 0; k < kw; ++k) {
          const double w = wrow[k];
          for (std::size_t t = 0; t < x.l; ++t) frow[t * stride + k] += w * xrow[t];
        }
      }
    }
  detail::count_macs(static_cast<std::uint64_t>(x.n) * cin * cout * kw * x.l);
  std::vector<double> y(x.n * cout * lout);
  for (std::size_t r = 0; r < x.n * cout; ++r) {
    const double bv = bd[r % cout];
    for (std::size_t t = 0; t < lout; ++t) y[r * lout + t] = full[r * lfull + padding + t] + bv;
  }
  Tensor out(batched_shape(x, cout, lout), std::move(y));
  if (!needs_record({&input, &kernels, &bias})) return out;
  record("conv1d_transposed", {input, kernels, bias}, out,
         [input, kernels, bias, out, x, cin, cout, kw, lout, lfull, stride, padding]() {
           const auto g = out.grad();
           const auto xd = input.data();
           const auto wd = kernels.data();
           std::vector<double> gfull(x.n * cout * lfull, 0.0);
           for (std::size_t r = 0; r < x.n * cout; ++r)
             std::copy_n(&g[r * lout], lout, &gfull[r * lfull + padding]);
           if (bias.requires_grad()) {
             std::vector<double> gb(cout, 0.0);
             for (std::size_t r = 0; r < x.n * cout; ++r)
               for (std::size_t t = 0; t < lout; ++t) gb[r % cout] += g[r * lout + t];
             accumulate(bias, gb);
           }
           std::vector<double> gw(kernels.requires_grad() ? kernels.numel() : 0, 0.0);
           std::vector<double> gx(input.requires_grad() ? input.numel() : 0, 0.0);
           for (std::size_t b = 0; b < x.n; ++b)
             for (std::size_t ci = 0; ci < cin; ++ci) {
               const double* xrow = &xd[(b * cin + ci) * x.l];
               for (std::size_t co = 0; co < cout; ++co) {
                 const double* grow = &gfull[(b * cout + co) * lfull];
                 const double* wrow = &wd[(ci * cout + co) * kw];
                 for (std::size_t k = 0; k < kw; ++k) {
                   if (!gw.empty()) {
                     double s = 0.0;
                     for (std::size_t t = 0; t < x.l; ++t) s += grow[t * stride + k] * xrow[t];
                     gw[(ci * cout + co) * kw + k] += s;
                   }
                   if (!gx.empty()) {
                     const double w = wrow[k];
                     double* gxrow = &gx[(b * cin + ci) * x.l];
                     for (std::size_t t = 0; t < x.l; ++t) gxrow[t] += w * grow[t * stride + k];
                   }
                 }
               }
             }
           if (!gw.empty()) accumulate(kernels, gw);
           if (!gx.empty()) accumulate(input, gx);
         });
  return out;
}

Tensor avgpool1d(const Tensor& input, std::size_t window) {
  const Batched x = as_batched(input, "avgpool1d");
  if (window == 0 || window > x.l) {
    throw ConfigError("avgpool1d: window " + std::to_string(window) + " exceeds input length " +
                      std::to_string(x.l));
  }
  const std::size_t lout = x.l / window;
  const auto xd = input.data();
  std::vector<double> y(x.n * x.c * lout);
  const double inv = 1.0 / static_cast<double>(window);
  for (std::size_t r = 0; r < x.n * x.c; ++r)
    for (std::size_t t = 0; t < lout; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < window; ++k) s += xd[r * x.l + t * window + k];
      y[r * lout + t] = s * inv;
    }
  detail::count_other(static_cast<std::uint64_t>(x.n) * x.c * lout * window);
  Tensor out(batched_shape(x, x.c, lout), std::move(y));
  if (!needs_record({&input})) return out;
  record("avgpool1d", {input}, out, [input, out, x, lout, window, inv]() {
    const auto g = out.grad();
    std::vector<double> gx(input.numel(), 0.0);
    for (std::size_t r = 0; r < x.n * x.c; ++r)
      for (std::size_t t = 0; t < lout; ++t)
        for (std::size_t k = 0; k < window; ++k) gx[r * x.l + t * window + k] = g[r * lout + t] * inv;
    accumulate(input, gx);
  });
  return out;
}

Tensor batchnorm1d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   bool train) {
  const Batched x = as_batched(input, "batchnorm1d");
  if (gamma.numel() != x.c || beta.numel() != x.c || state.running_mean.size() != x.c ||
      state.running_var.size() != x.c) {
    throw DimensionError("batchnorm1d: parameters do not match " + std::to_string(x.c) + " channels");
  }
  const std::size_t m = x.n * x.l;
  const auto xd = input.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<double> mean_c(x.c), invstd(x.c);
  for (std::size_t c = 0; c < x.c; ++c) {
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < x.n; ++b)
        for (std::size_t t = 0; t < x.l; ++t) s += xd[(b * x.c + c) * x.l + t];
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t b = 0; b < x.n; ++b)
        for (std::size_t t = 0; t < x.l; ++t) {
          const double d = xd[(b * x.c + c) * x.l + t] - mu;
          v += d * d;
        }
      const double var = v / static_cast<double>(m);
      const double unbiased = m > 1 ? v / static_cast<double>(m - 1) : var;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
      mean_c[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + state.eps);
    } else {
      mean_c[c] = state.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }
  std::vector<double> xhat(xd.size()), y(xd.size());
  for (std::size_t b = 0; b < x.n; ++b)
    for (std::size_t c = 0; c < x.c; ++c)
      for (std::size_t t = 0; t < x.l; ++t) {
        const std::size_t i = (b * x.c + c) * x.l + t;
        xhat[i] = (xd[i] - mean_c[c]) * invstd[c];
        y[i] = gd[c] * xhat[i] + bd[c];
      }
  detail::count_other(xd.size());
  Tensor out(input.shape(), std::move(y));
  if (!needs_record({&input, &gamma, &beta})) return out;
  record("batchnorm1d", {input, gamma, beta}, out,
         [input, gamma, beta, out, x, m, train, invstd, xhat = std::move(xhat)]() {
           const auto g = out.grad();
           const auto gd = gamma.data();
           std::vector<double> sum_g(x.c, 0.0), sum_gx(x.c, 0.0);
           for (std::size_t b = 0; b < x.n; ++b)
             for (std::size_t c = 0; c < x.c; ++c)
               for (std::size_t t = 0; t < x.l; ++t) {
                 const std::size_t i = (b * x.c + c) * x.l + t;
                 sum_g[c] += g[i];
                 sum_gx[c] += g[i] * xhat[i];
               }
           if (gamma.requires_grad()) accumulate(gamma, sum_gx);
           if (beta.requires_grad()) accumulate(beta, sum_g);
           if (input.requires_grad()) {
             std::vector<double> gx(input.numel());
             const double md = static_cast<double>(m);
             for (std::size_t b = 0; b < x.n; ++b)
               for (std::size_t c = 0; c < x.c; ++c)
                 for (std::size_t t = 0; t < x.l; ++t) {
                   const std::size_t i = (b * x.c + c) * x.l + t;
                   if (train) {
                     gx[i] = gd[c] * invstd[c] / md * (md * g[i] - sum_g[c] - xhat[i] * sum_gx[c]);
                   } else {
                     gx[i] = gd[c] * invstd[c] * g[i];
                   }
                 }
             accumulate(input, gx);
           }
         });
  return out;
}

Tensor dropout(const Tensor& input, double p, bool train, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (!train || p == 0.0) return input;
  Rng rng(seed);
  const auto xd = input.data();
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(xd.size()), y(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep : 0.0;
    y[i] = xd[i] * mask[i];
  }
  Tensor out(input.shape(), std::move(y));
  if (!needs_record({&input})) return out;
  record("dropout", {input}, out, [input, out, mask = std::move(mask)]() {
    const auto g = out.grad();
    std::vector<double> gx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * mask[i];
    accumulate(input, gx);
  });
  return out;
}

namespace {

std::vector<double> softmax_rows(std::span<const double> x, std::size_t rows, std::size_t cols) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * cols];
    double* yr = &y[r * cols];
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= s;
  }
  return y;
}

std::pair<std::size_t, std::size_t> rows_cols(const Tensor& a) {
  const std::size_t cols = a.shape().back();
  return {a.numel() / cols, cols};
}

}  // namespace

Tensor softmax(const Tensor& a) {
  const auto [rows, cols] = rows_cols(a);
  detail::count_other(a.numel());
  Tensor out(a.shape(), softmax_rows(a.data(), rows, cols));
  if (!needs_record({&a})) return out;
  record("softmax", {a}, out, [a, out, rows, cols]() {
    const auto g = out.grad();
    const auto y = out.data();
    std::vector<double> ga(g.size());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] = y[r * cols + j] * (g[r * cols + j] - dot);
    }
    accumulate(a, ga);
  });
  return out;
}

Tensor log_softmax(const Tensor& a) {
  const auto [rows, cols] = rows_cols(a);
  const auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * cols];
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = xr[j] - lse;
  }
  Tensor out(a.shape(), std::move(y));
  if (!needs_record({&a})) return out;
  record("log_softmax", {a}, out, [a, out, rows, cols]() {
    const auto g = out.grad();
    const auto y = out.data();
    std::vector<double> ga(g.size());
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] = g[r * cols + j] - std::exp(y[r * cols + j]) * gs;
    }
    accumulate(a, ga);
  });
  return out;
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(prediction.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const auto p = prediction.data();
  const auto t = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  const double n = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(s / n);
  if (!needs_record({&prediction, &target})) return out;
  record("mse_loss", {prediction, target}, out, [prediction, target, out, n]() {
    const double g = out.grad()[0];
    const auto p = prediction.data();
    const auto t = target.data();
    std::vector<double> gp(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) gp[i] = 2.0 * (p[i] - t[i]) / n * g;
    if (prediction.requires_grad()) accumulate(prediction, gp);
    if (target.requires_grad()) {
      for (double& v : gp) v = -v;
      accumulate(target, gp);
    }
  });
  return out;
}

Tensor cross_entropy_with_softmax(const Tensor& logits, std::span<const int> labels) {
  const auto [rows, cols] = rows_cols(logits);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= cols)
      throw DimensionError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(cols) + ")");
  auto probs = softmax_rows(logits.data(), rows, cols);
  const auto x = logits.data();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * cols];
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(xr[j] - mx);
    loss -= xr[labels[r]] - mx - std::log(s);
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(rows));
  if (!needs_record({&logits})) return out;
  std::vector<int> lab(labels.begin(), labels.end());
  record("cross_entropy", {logits}, out, [logits, out, rows, cols, lab, probs = std::move(probs)]() {
    const double g = out.grad()[0] / static_cast<double>(rows);
    std::vector<double> gl(probs.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols; ++j)
        gl[r * cols + j] = g * (probs[r * cols + j] - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
    accumulate(logits, gl);
  });
  return out;
}

double sigmoid_surrogate(double x, double threshold, double slope) {
  const double z = slope * (x - threshold);
  // Even in z; the |z| form avoids the cancellation in s(1 - s) for large z.
  const double e = std::exp(-std::abs(z));
  return slope * e / ((1.0 + e) * (1.0 + e));
}

Tensor spike_fn(const Tensor& a, double threshold, double slope, SpikeForward mode) {
  if (!(slope > 0.0)) throw ConfigError("spike_fn: surrogate slope must be positive");
  const auto x = a.data();
  std::vector<double> y(x.size());
  if (mode == SpikeForward::Hard) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= threshold ? 1.0 : 0.0;
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = slope * (x[i] - threshold);
      y[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  }
  Tensor out(a.shape(), std::move(y));
  if (!needs_record({&a})) return out;
  record("spike_fn", {a}, out, [a, out, threshold, slope]() {
    const auto g = out.grad();
    const auto x = a.data();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * sigmoid_surrogate(x[i], threshold, slope);
    accumulate(a, ga);
  });
  return out;
}

}  // namespace big::ops

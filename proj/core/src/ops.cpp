#include "oapt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace oapt::ops {

namespace {

Tape* tape_of(std::initializer_list<const Tensor*> ts) {
  if (!autograd_enabled()) return nullptr;
  for (const Tensor* t : ts)
    if (t->defined() && t->requires_grad()) return t->tape();
  return nullptr;
}

// Marks the output as grad-carrying and records the adjoint closure.
template <typename Fn>
void autograd(Tensor& out, Tape* tp, Fn&& backward) {
  if (!tp) return;
  out.set_autograd(tp);
  tp->record(std::forward<Fn>(backward));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

void check_finite(const Tensor& t, const char* op) {
  for (real v : t.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input value");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const auto n = static_cast<std::size_t>(a.size());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  autograd(out, tape_of({&a, &b}), [a, b, out]() mutable {
    const auto& g = out.grad();
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i];
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const auto n = static_cast<std::size_t>(a.size());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  autograd(out, tape_of({&a, &b}), [a, b, out]() mutable {
    const auto& g = out.grad();
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] -= g[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const auto n = static_cast<std::size_t>(a.size());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  autograd(out, tape_of({&a, &b}), [a, b, out]() mutable {
    const auto& g = out.grad();
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * b.data()[i];
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i] * a.data()[i];
  });
  return out;
}

Tensor add_scalar(const Tensor& a, real s) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] + s;
  autograd(out, tape_of({&a}), [a, out]() mutable {
    const auto& g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
  });
  return out;
}

Tensor mul_scalar(const Tensor& a, real s) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] * s;
  autograd(out, tape_of({&a}), [a, out, s]() mutable {
    const auto& g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * s;
  });
  return out;
}

Tensor add_bcast(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() > as.size() ||
      !std::equal(bs.rbegin(), bs.rend(), as.rbegin()))
    throw DimensionError("add_bcast: " + shape_str(bs) + " is not a suffix of " +
                         shape_str(as));
  const std::size_t bn = static_cast<std::size_t>(b.size());
  Tensor out = Tensor::zeros(as);
  for (std::size_t i = 0; i < a.data().size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i % bn];
  autograd(out, tape_of({&a, &b}), [a, b, out, bn]() mutable {
    const auto& g = out.grad();
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i];
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i % bn] += g[i];
  });
  return out;
}

Tensor sum(const Tensor& a) {
  real acc = 0;
  for (real v : a.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  autograd(out, tape_of({&a}), [a, out]() mutable {
    const real g = out.grad()[0];
    for (auto& gv : a.grad()) gv += g;
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const real inv = real(1) / static_cast<real>(a.size());
  real acc = 0;
  for (real v : a.data()) acc += v;
  Tensor out = Tensor::scalar(acc * inv);
  autograd(out, tape_of({&a}), [a, out, inv]() mutable {
    const real g = out.grad()[0] * inv;
    for (auto& gv : a.grad()) gv += g;
  });
  return out;
}

Tensor mean_hw(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("mean_hw expects [C,H,W], got " + shape_str(x.shape()));
  const auto C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const real inv = real(1) / static_cast<real>(H * W);
  Tensor out = Tensor::zeros({C});
  for (std::int64_t c = 0; c < C; ++c) {
    real acc = 0;
    const real* p = x.data().data() + c * H * W;
    for (std::int64_t i = 0; i < H * W; ++i) acc += p[i];
    out.data()[static_cast<std::size_t>(c)] = acc * inv;
  }
  autograd(out, tape_of({&x}), [x, out, C, H, W, inv]() mutable {
    for (std::int64_t c = 0; c < C; ++c) {
      const real g = out.grad()[static_cast<std::size_t>(c)] * inv;
      real* p = x.grad().data() + c * H * W;
      for (std::int64_t i = 0; i < H * W; ++i) p[i] += g;
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.data().size(); ++i)
    out.data()[i] = x.data()[i] > 0 ? x.data()[i] : 0;
  autograd(out, tape_of({&x}), [x, out]() mutable {
    const auto& g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data()[i] > 0) x.grad()[i] += g[i];
  });
  return out;
}

// tanh-approximation GELU:
//   gelu(x) = 0.5 x (1 + tanh(c0 (x + c1 x^3)))
// with c0 = sqrt(2/pi) = 0.7978845608028654 and c1 = 0.044715.
Tensor gelu(const Tensor& x) {
  constexpr real c0 = 0.7978845608028654;
  constexpr real c1 = 0.044715;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const real v = x.data()[i];
    out.data()[i] = real(0.5) * v * (1 + std::tanh(c0 * (v + c1 * v * v * v)));
  }
  autograd(out, tape_of({&x}), [x, out]() mutable {
    const auto& g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const real v = x.data()[i];
      const real t = std::tanh(c0 * (v + c1 * v * v * v));
      const real d = real(0.5) * (1 + t) +
                     real(0.5) * v * (1 - t * t) * c0 * (1 + 3 * c1 * v * v);
      x.grad()[i] += g[i] * d;
    }
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.data().size(); ++i)
    out.data()[i] = real(1) / (1 + std::exp(-x.data()[i]));
  autograd(out, tape_of({&x}), [x, out]() mutable {
    const auto& g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const real y = out.data()[i];
      x.grad()[i] += g[i] * y * (1 - y);
    }
  });
  return out;
}

namespace {

struct BatchPlan {
  std::vector<std::int64_t> out_batch;           // broadcast batch shape
  std::vector<std::int64_t> a_off, b_off;        // per out-batch matrix offsets
};

BatchPlan plan_batches(const std::vector<std::int64_t>& as,
                       const std::vector<std::int64_t>& bs) {
  const std::size_t ab = as.size() - 2, bb = bs.size() - 2;
  const std::size_t nb = std::max(ab, bb);
  std::vector<std::int64_t> abatch(nb, 1), bbatch(nb, 1), obatch(nb, 1);
  for (std::size_t i = 0; i < ab; ++i) abatch[nb - ab + i] = as[i];
  for (std::size_t i = 0; i < bb; ++i) bbatch[nb - bb + i] = bs[i];
  for (std::size_t i = 0; i < nb; ++i) {
    if (abatch[i] == bbatch[i] || abatch[i] == 1 || bbatch[i] == 1)
      obatch[i] = std::max(abatch[i], bbatch[i]);
    else
      throw DimensionError("matmul: batch extents not broadcastable: " + shape_str(as) +
                           " vs " + shape_str(bs));
  }
  std::int64_t total = 1;
  for (auto e : obatch) total *= e;
  BatchPlan plan;
  plan.out_batch = obatch;
  plan.a_off.resize(static_cast<std::size_t>(total));
  plan.b_off.resize(static_cast<std::size_t>(total));
  for (std::int64_t t = 0; t < total; ++t) {
    std::int64_t rem = t, aoff = 0, boff = 0;
    std::int64_t amul = 1, bmul = 1;
    // decompose right-to-left
    std::vector<std::int64_t> idx(nb);
    for (std::size_t i = nb; i-- > 0;) {
      idx[i] = rem % obatch[i];
      rem /= obatch[i];
    }
    for (std::size_t i = nb; i-- > 0;) {
      aoff += (abatch[i] == 1 ? 0 : idx[i]) * amul;
      boff += (bbatch[i] == 1 ? 0 : idx[i]) * bmul;
      amul *= abatch[i];
      bmul *= bbatch[i];
    }
    plan.a_off[static_cast<std::size_t>(t)] = aoff;
    plan.b_off[static_cast<std::size_t>(t)] = boff;
  }
  return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::int64_t m = a.extent(a.rank() - 2), k = a.extent(a.rank() - 1);
  const std::int64_t k2 = b.extent(b.rank() - 2), n = b.extent(b.rank() - 1);
  if (k != k2)
    throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  BatchPlan plan = plan_batches(a.shape(), b.shape());
  std::vector<std::int64_t> oshape = plan.out_batch;
  oshape.push_back(m);
  oshape.push_back(n);
  Tensor out = Tensor::zeros(oshape);
  const std::int64_t batches = static_cast<std::int64_t>(plan.a_off.size());
  const real* ad = a.data().data();
  const real* bd = b.data().data();
  real* od = out.data().data();
  for (std::int64_t t = 0; t < batches; ++t) {
    const real* A = ad + plan.a_off[static_cast<std::size_t>(t)] * m * k;
    const real* B = bd + plan.b_off[static_cast<std::size_t>(t)] * k * n;
    real* O = od + t * m * n;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const real av = A[i * k + kk];
        const real* brow = B + kk * n;
        real* orow = O + i * n;
        for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
  }
  autograd(out, tape_of({&a, &b}), [a, b, out, plan, m, k, n, batches]() mutable {
    const real* ad = a.data().data();
    const real* bd = b.data().data();
    const real* gd = out.grad().data();
    for (std::int64_t t = 0; t < batches; ++t) {
      const real* A = ad + plan.a_off[static_cast<std::size_t>(t)] * m * k;
      const real* B = bd + plan.b_off[static_cast<std::size_t>(t)] * k * n;
      const real* G = gd + t * m * n;
      if (a.requires_grad()) {
        real* GA = a.grad().data() + plan.a_off[static_cast<std::size_t>(t)] * m * k;
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t kk = 0; kk < k; ++kk) {
            real acc = 0;
            const real* grow = G + i * n;
            const real* brow = B + kk * n;
            for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            GA[i * k + kk] += acc;
          }
      }
      if (b.requires_grad()) {
        real* GB = b.grad().data() + plan.b_off[static_cast<std::size_t>(t)] * k * n;
        for (std::int64_t kk = 0; kk < k; ++kk)
          for (std::int64_t i = 0; i < m; ++i) {
            const real av = A[i * k + kk];
            const real* grow = G + i * n;
            real* gbrow = GB + kk * n;
            for (std::int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
      }
    }
  });
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("softmax_lastdim needs rank >= 1");
  check_finite(x, "softmax_lastdim");
  const std::int64_t n = x.extent(x.rank() - 1);
  const std::int64_t rows = x.size() / n;
  Tensor out = Tensor::zeros(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const real* xi = x.data().data() + r * n;
    real* yi = out.data().data() + r * n;
    real mx = xi[0];
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    real z = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    const real inv = real(1) / z;
    for (std::int64_t j = 0; j < n; ++j) yi[j] *= inv;
  }
  autograd(out, tape_of({&x}), [x, out, rows, n]() mutable {
    for (std::int64_t r = 0; r < rows; ++r) {
      const real* y = out.data().data() + r * n;
      const real* g = out.grad().data() + r * n;
      real dot = 0;
      for (std::int64_t j = 0; j < n; ++j) dot += g[j] * y[j];
      real* gx = x.grad().data() + r * n;
      for (std::int64_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  if (eps <= 0) throw ArgumentError("layer_norm: eps must be positive");
  const std::int64_t n = x.extent(x.rank() - 1);
  if (gamma.size() != n || beta.size() != n)
    throw DimensionError("layer_norm: gamma/beta must match last extent " + std::to_string(n));
  const std::int64_t rows = x.size() / n;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<real> xhat(static_cast<std::size_t>(x.size()));
  std::vector<real> rstd(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const real* xi = x.data().data() + r * n;
    real mu = 0;
    for (std::int64_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<real>(n);
    real var = 0;  // biased
    for (std::int64_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<real>(n);
    const real inv = real(1) / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = inv;
    real* yi = out.data().data() + r * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const real h = (xi[j] - mu) * inv;
      xhat[static_cast<std::size_t>(r * n + j)] = h;
      yi[j] = gamma.data()[static_cast<std::size_t>(j)] * h +
              beta.data()[static_cast<std::size_t>(j)];
    }
  }
  autograd(out, tape_of({&x, &gamma, &beta}),
           [x, gamma, beta, out, rows, n, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
    for (std::int64_t r = 0; r < rows; ++r) {
      const real* g = out.grad().data() + r * n;
      const real* h = xhat.data() + r * n;
      if (gamma.requires_grad())
        for (std::int64_t j = 0; j < n; ++j)
          gamma.grad()[static_cast<std::size_t>(j)] += g[j] * h[j];
      if (beta.requires_grad())
        for (std::int64_t j = 0; j < n; ++j) beta.grad()[static_cast<std::size_t>(j)] += g[j];
      if (x.requires_grad()) {
        const real inv = rstd[static_cast<std::size_t>(r)];
        real mean_gh = 0, mean_ghh = 0;
        for (std::int64_t j = 0; j < n; ++j) {
          const real gh = g[j] * gamma.data()[static_cast<std::size_t>(j)];
          mean_gh += gh;
          mean_ghh += gh * h[j];
        }
        mean_gh /= static_cast<real>(n);
        mean_ghh /= static_cast<real>(n);
        real* gx = x.grad().data() + r * n;
        for (std::int64_t j = 0; j < n; ++j) {
          const real gh = g[j] * gamma.data()[static_cast<std::size_t>(j)];
          gx[j] += inv * (gh - mean_gh - h[j] * mean_ghh);
        }
      }
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw DimensionError("linear: w must be [out,in]");
  const std::int64_t in = w.extent(1), outd = w.extent(0);
  if (x.extent(x.rank() - 1) != in)
    throw DimensionError("linear: input last extent " + std::to_string(x.extent(x.rank() - 1)) +
                         " vs weight in " + std::to_string(in));
  if (b.size() != outd) throw DimensionError("linear: bias extent mismatch");
  const std::int64_t rows = x.size() / in;
  std::vector<std::int64_t> oshape = x.shape();
  oshape.back() = outd;
  Tensor out = Tensor::zeros(oshape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const real* xi = x.data().data() + r * in;
    real* yi = out.data().data() + r * outd;
    for (std::int64_t o = 0; o < outd; ++o) {
      const real* wr = w.data().data() + o * in;
      real acc = b.data()[static_cast<std::size_t>(o)];
      for (std::int64_t j = 0; j < in; ++j) acc += wr[j] * xi[j];
      yi[o] = acc;
    }
  }
  autograd(out, tape_of({&x, &w, &b}), [x, w, b, out, rows, in, outd]() mutable {
    for (std::int64_t r = 0; r < rows; ++r) {
      const real* g = out.grad().data() + r * outd;
      const real* xi = x.data().data() + r * in;
      if (b.requires_grad())
        for (std::int64_t o = 0; o < outd; ++o) b.grad()[static_cast<std::size_t>(o)] += g[o];
      if (w.requires_grad())
        for (std::int64_t o = 0; o < outd; ++o) {
          real* gw = w.grad().data() + o * in;
          const real gv = g[o];
          for (std::int64_t j = 0; j < in; ++j) gw[j] += gv * xi[j];
        }
      if (x.requires_grad()) {
        real* gx = x.grad().data() + r * in;
        for (std::int64_t o = 0; o < outd; ++o) {
          const real* wr = w.data().data() + o * in;
          const real gv = g[o];
          for (std::int64_t j = 0; j < in; ++j) gx[j] += gv * wr[j];
        }
      }
    }
  });
  return out;
}

namespace {

void check_conv_kernel(std::int64_t kh, std::int64_t kw) {
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ArgumentError("conv kernel extents must be odd, got " + std::to_string(kh) + "x" +
                        std::to_string(kw));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  if (x.rank() != 3 || w.rank() != 4)
    throw DimensionError("conv2d expects x [C,H,W], w [Cout,Cin,kh,kw]");
  const std::int64_t cin = x.extent(0), H = x.extent(1), W = x.extent(2);
  const std::int64_t cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  if (w.extent(1) != cin)
    throw DimensionError("conv2d: channel mismatch, input " + std::to_string(cin) +
                         " vs kernel " + std::to_string(w.extent(1)));
  if (b.size() != cout) throw DimensionError("conv2d: bias extent mismatch");
  check_conv_kernel(kh, kw);
  const std::int64_t ph = kh / 2, pw = kw / 2, s = stride;
  const std::int64_t OH = (H + 2 * ph - kh) / s + 1, OW = (W + 2 * pw - kw) / s + 1;
  Tensor out = Tensor::zeros({cout, OH, OW});
  const real* xd = x.data().data();
  real* od = out.data().data();
  for (std::int64_t co = 0; co < cout; ++co) {
    const real bias = b.data()[static_cast<std::size_t>(co)];
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        real acc = bias;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          const real* xp = xd + (ci * H) * W;
          const real* wp = w.data().data() + ((co * cin + ci) * kh) * kw;
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            const std::int64_t iy = oy * s + ky - ph;
            if (iy < 0 || iy >= H) continue;
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t ix = ox * s + kx - pw;
              if (ix < 0 || ix >= W) continue;
              acc += wp[ky * kw + kx] * xp[iy * W + ix];
            }
          }
        }
        od[(co * OH + oy) * OW + ox] = acc;
      }
  }
  autograd(out, tape_of({&x, &w, &b}),
           [x, w, b, out, cin, cout, H, W, kh, kw, ph, pw, s, OH, OW]() mutable {
    const real* gd = out.grad().data();
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          const real g = gd[(co * OH + oy) * OW + ox];
          if (b.requires_grad()) b.grad()[static_cast<std::size_t>(co)] += g;
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              const std::int64_t iy = oy * s + ky - ph;
              if (iy < 0 || iy >= H) continue;
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const std::int64_t ix = ox * s + kx - pw;
                if (ix < 0 || ix >= W) continue;
                if (w.requires_grad())
                  w.grad()[static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx)] +=
                      g * x.data()[static_cast<std::size_t>((ci * H + iy) * W + ix)];
                if (x.requires_grad())
                  x.grad()[static_cast<std::size_t>((ci * H + iy) * W + ix)] +=
                      g * w.data()[static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
              }
            }
        }
  });
  return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride) {
  if (x.rank() != 3 || w.rank() != 3)
    throw DimensionError("depthwise_conv2d expects x [C,H,W], w [C,kh,kw]");
  const std::int64_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const std::int64_t kh = w.extent(1), kw = w.extent(2);
  if (w.extent(0) != C)
    throw DimensionError("depthwise_conv2d: one filter per input channel required");
  check_conv_kernel(kh, kw);
  const std::int64_t ph = kh / 2, pw = kw / 2, s = stride;
  const std::int64_t OH = (H + 2 * ph - kh) / s + 1, OW = (W + 2 * pw - kw) / s + 1;
  Tensor out = Tensor::zeros({C, OH, OW});
  for (std::int64_t c = 0; c < C; ++c) {
    const real* xp = x.data().data() + c * H * W;
    const real* wp = w.data().data() + c * kh * kw;
    real* op = out.data().data() + c * OH * OW;
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        real acc = 0;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const std::int64_t iy = oy * s + ky - ph;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::int64_t ix = ox * s + kx - pw;
            if (ix < 0 || ix >= W) continue;
            acc += wp[ky * kw + kx] * xp[iy * W + ix];
          }
        }
        op[oy * OW + ox] = acc;
      }
  }
  autograd(out, tape_of({&x, &w}), [x, w, out, C, H, W, kh, kw, ph, pw, s, OH, OW]() mutable {
    for (std::int64_t c = 0; c < C; ++c) {
      const real* gp = out.grad().data() + c * OH * OW;
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          const real g = gp[oy * OW + ox];
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            const std::int64_t iy = oy * s + ky - ph;
            if (iy < 0 || iy >= H) continue;
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t ix = ox * s + kx - pw;
              if (ix < 0 || ix >= W) continue;
              if (w.requires_grad())
                w.grad()[static_cast<std::size_t>((c * kh + ky) * kw + kx)] +=
                    g * x.data()[static_cast<std::size_t>((c * H + iy) * W + ix)];
              if (x.requires_grad())
                x.grad()[static_cast<std::size_t>((c * H + iy) * W + ix)] +=
                    g * w.data()[static_cast<std::size_t>((c * kh + ky) * kw + kx)];
            }
          }
        }
    }
  });
  return out;
}

Tensor depthwise_separable_conv(const Tensor& x, const Tensor& w_depth,
                                const Tensor& w_point, const Tensor& b, int stride) {
  if (w_point.rank() != 4 || w_point.extent(2) != 1 || w_point.extent(3) != 1)
    throw DimensionError("depthwise_separable_conv: pointwise kernel must be 1x1");
  Tensor mid = depthwise_conv2d(x, w_depth, stride);
  return conv2d(mid, w_point, b, 1);
}

Tensor gather(const Tensor& x, const IndexMap& idx, std::vector<std::int64_t> out_shape) {
  const auto n = shape_numel(out_shape);
  if (static_cast<std::size_t>(n) != idx->size())
    throw ContractError("gather: index map size does not match output shape");
  Tensor out = Tensor::zeros(std::move(out_shape));
  const real* xd = x.data().data();
  for (std::size_t i = 0; i < idx->size(); ++i)
    out.data()[i] = xd[static_cast<std::size_t>((*idx)[i])];
  autograd(out, tape_of({&x}), [x, out, idx]() mutable {
    const auto& g = out.grad();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[static_cast<std::size_t>((*idx)[i])] += g[i];
  });
  return out;
}

Tensor assemble(const std::vector<Tensor>& parts, const std::vector<IndexMap>& dest,
                std::vector<std::int64_t> out_shape) {
  if (parts.size() != dest.size())
    throw ContractError("assemble: parts/dest size mismatch");
  const auto n = shape_numel(out_shape);
  std::int64_t total = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (static_cast<std::size_t>(parts[p].size()) != dest[p]->size())
      throw ContractError("assemble: part size does not match its destination map");
    total += parts[p].size();
  }
  if (total != n)
    throw ContractError("assemble: parts cover " + std::to_string(total) +
                        " elements, output has " + std::to_string(n));
  Tensor out = Tensor::zeros(std::move(out_shape));
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& src = parts[p].data();
    const auto& d = *dest[p];
    for (std::size_t i = 0; i < src.size(); ++i)
      out.data()[static_cast<std::size_t>(d[i])] = src[i];
  }
  Tape* tp = nullptr;
  if (autograd_enabled())
    for (const auto& part : parts)
      if (part.requires_grad()) { tp = part.tape(); break; }
  autograd(out, tp, [parts, dest, out]() mutable {
    const auto& g = out.grad();
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (!parts[p].requires_grad()) continue;
      auto& gp = parts[p].grad();
      const auto& d = *dest[p];
      for (std::size_t i = 0; i < gp.size(); ++i)
        gp[i] += g[static_cast<std::size_t>(d[i])];
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, std::vector<std::int64_t> shape) {
  if (shape_numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  Tensor out = Tensor::from_data(std::move(shape), x.data());
  autograd(out, tape_of({&x}), [x, out]() mutable {
    const auto& g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) x.grad()[i] += g[i];
  });
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::int64_t>& axes) {
  const auto r = static_cast<std::size_t>(x.rank());
  if (axes.size() != r) throw DimensionError("permute: axes rank mismatch");
  std::vector<std::int64_t> oshape(r), xstrides(r, 1);
  for (std::size_t i = r - 1; i > 0; --i)
    xstrides[i - 1] = xstrides[i] * x.shape()[i];
  for (std::size_t i = 0; i < r; ++i) oshape[i] = x.shape()[static_cast<std::size_t>(axes[i])];
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.size()));
  std::vector<std::int64_t> coord(r, 0);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    std::int64_t src = 0;
    for (std::size_t d = 0; d < r; ++d)
      src += coord[d] * xstrides[static_cast<std::size_t>(axes[d])];
    (*idx)[static_cast<std::size_t>(i)] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++coord[d] < oshape[d]) break;
      coord[d] = 0;
    }
  }
  return gather(x, idx, oshape);
}

Tensor pad2d_replicate(const Tensor& x, int top, int bottom, int left, int right) {
  if (x.rank() != 3) throw DimensionError("pad2d_replicate expects [C,H,W]");
  const std::int64_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const std::int64_t OH = H + top + bottom, OW = W + left + right;
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(C * OH * OW));
  std::size_t i = 0;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < OH; ++y) {
      const std::int64_t sy = std::clamp<std::int64_t>(y - top, 0, H - 1);
      for (std::int64_t xq = 0; xq < OW; ++xq) {
        const std::int64_t sx = std::clamp<std::int64_t>(xq - left, 0, W - 1);
        (*idx)[i++] = (c * H + sy) * W + sx;
      }
    }
  return gather(x, idx, {C, OH, OW});
}

Tensor crop2d(const Tensor& x, int top, int left, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() != 3) throw DimensionError("crop2d expects [C,H,W]");
  const std::int64_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  if (top + out_h > H || left + out_w > W)
    throw DimensionError("crop2d: window out of bounds");
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(C * out_h * out_w));
  std::size_t i = 0;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < out_h; ++y)
      for (std::int64_t xq = 0; xq < out_w; ++xq)
        (*idx)[i++] = (c * H + (y + top)) * W + (xq + left);
  return gather(x, idx, {C, out_h, out_w});
}

Tensor cyclic_shift2d(const Tensor& x, int dy, int dx) {
  if (x.rank() != 3) throw DimensionError("cyclic_shift2d expects [C,H,W]");
  const std::int64_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const auto mod = [](std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; };
  auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(C * H * W));
  std::size_t i = 0;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < H; ++y) {
      const std::int64_t sy = mod(y - dy, H);
      for (std::int64_t xq = 0; xq < W; ++xq)
        (*idx)[i++] = (c * H + sy) * W + mod(xq - dx, W);
    }
  return gather(x, idx, {C, H, W});
}

Tensor charbonnier(const Tensor& pred, const Tensor& target, real eps) {
  check_same_shape(pred, target, "charbonnier");
  const real inv = real(1) / static_cast<real>(pred.size());
  // compensated summation: keeps the mean exact for constant summands
  real acc = 0, comp = 0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const real d = pred.data()[i] - target.data()[i];
    const real term = std::sqrt(d * d + eps * eps) - comp;
    const real next = acc + term;
    comp = (next - acc) - term;
    acc = next;
  }
  Tensor out = Tensor::scalar(acc * inv);
  autograd(out, tape_of({&pred, &target}), [pred, target, out, eps, inv]() mutable {
    const real g = out.grad()[0] * inv;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
      const real d = pred.data()[i] - target.data()[i];
      const real dd = g * d / std::sqrt(d * d + eps * eps);
      if (pred.requires_grad()) pred.grad()[i] += dd;
      if (target.requires_grad()) target.grad()[i] -= dd;
    }
  });
  return out;
}

Tensor l1(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "l1");
  real acc = 0;
  for (std::size_t i = 0; i < pred.data().size(); ++i)
    acc += std::abs(pred.data()[i] - target.data()[i]);
  Tensor out = Tensor::scalar(acc);
  autograd(out, tape_of({&pred, &target}), [pred, target, out]() mutable {
    const real g = out.grad()[0];
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
      const real d = pred.data()[i] - target.data()[i];
      const real s = d > 0 ? g : (d < 0 ? -g : 0);
      if (pred.requires_grad()) pred.grad()[i] += s;
      if (target.requires_grad()) target.grad()[i] -= s;
    }
  });
  return out;
}

}  // namespace oapt::ops

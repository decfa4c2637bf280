#include "fuzzyseg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/kernels.hpp"

namespace fuzzyseg::tk {

// --- Graph ------------------------------------------------------------------

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owned(Var v) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    throw ArgumentError("variable does not belong to this graph");
  }
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (!in.valid()) continue;
    check_owned(in);
    needs = needs || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor Graph::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor& Graph::grad_buffer(Var v) {
  check_owned(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) {
    sink_ = Tensor(n.value.shape(), 0.0);
    return sink_;
  }
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var root) {
  check_owned(root);
  if (nodes_[root.id_].value.numel() != 1) {
    throw ArgumentError("backward() needs a scalar root");
  }
  for (auto& n : nodes_) n.grad = Tensor();
  backward_visits_ = 0;
  if (!nodes_[root.id_].requires_grad) return;
  nodes_[root.id_].grad = Tensor(nodes_[root.id_].value.shape(), 1.0);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    ++backward_visits_;
    if (!n.backward || n.grad.empty()) continue;
    // Closures only write to earlier nodes, so n stays valid.
    n.backward(*this, n.value, n.grad);
  }
}

// --- helpers ----------------------------------------------------------------

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw ArgumentError("operation on an empty variable");
  return a.graph();
}

void same_shape(Var a, Var b, const char* op) {
  require_same_shape(a.value(), b.value(), op);
}

void accumulate(Tensor& dst, const Tensor& src) {
  kernels::active().axpby(dst.numel(), 1.0, src.data(), 1.0, dst.data());
}

}  // namespace

// --- elementwise ---------------------------------------------------------------

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Tensor out = a.value();
  accumulate(out, b.value());
  return graph_of(a).record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    accumulate(g.grad_buffer(a), gy);
    accumulate(g.grad_buffer(b), gy);
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Tensor out = a.value();
  kernels::active().axpby(out.numel(), -1.0, b.value().data(), 1.0, out.data());
  return graph_of(a).record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    accumulate(g.grad_buffer(a), gy);
    Tensor& gb = g.grad_buffer(b);
    kernels::active().axpby(gb.numel(), -1.0, gy.data(), 1.0, gb.data());
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return graph_of(a).record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (g.requires_grad(a)) {
      Tensor& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return graph_of(a).record(std::move(out), {a}, [a, s](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& ga = g.grad_buffer(a);
    kernels::active().axpby(ga.numel(), s, gy.data(), 1.0, ga.data());
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return graph_of(a).record(std::move(out), {a}, [a](Graph& g, const Tensor&, const Tensor& gy) {
    accumulate(g.grad_buffer(a), gy);
  });
}

Var scale_channels(Var x, const Tensor& factors) {
  const Shape& s = x.shape();
  if (s.size() != 4 || factors.shape() != Shape{s[0], s[1]}) {
    throw ArgumentError("scale_channels: expected x [N,C,H,W] and factors [N,C], got " +
                        shape_to_string(s) + " and " + shape_to_string(factors.shape()));
  }
  const std::size_t plane = s[2] * s[3];
  Tensor out = x.value();
  for (std::size_t nc = 0; nc < s[0] * s[1]; ++nc) {
    const double f = factors[nc];
    double* p = out.data() + nc * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] *= f;
  }
  return graph_of(x).record(std::move(out), {x}, [x, factors, plane](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t nc = 0; nc < factors.numel(); ++nc) {
      const double f = factors[nc];
      for (std::size_t i = 0; i < plane; ++i) gx[nc * plane + i] += f * gy[nc * plane + i];
    }
  });
}

Var silu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  }
  return graph_of(x).record(std::move(out), {x}, [x](Graph& g, const Tensor&, const Tensor& gy) {
    const Tensor& xv = x.value();
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += gy[i] * sig * (1.0 + xv[i] * (1.0 - sig));
    }
  });
}

Var exp(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::exp(v);
  return graph_of(x).record(std::move(out), {x}, [x](Graph& g, const Tensor& y, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < y.numel(); ++i) gx[i] += gy[i] * y[i];
  });
}

Var log(Var x, double floor) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::log(std::max(xv[i], floor));
  return graph_of(x).record(std::move(out), {x}, [x, floor](Graph& g, const Tensor&, const Tensor& gy) {
    const Tensor& xv = x.value();
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      if (xv[i] > floor) gx[i] += gy[i] / xv[i];
    }
  });
}

// --- softmax ----------------------------------------------------------------

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " +
                        shape_to_string(s));
  }
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor softmax_values(const Tensor& x, std::size_t axis) {
  const AxisSplit ax = split_axis(x.shape(), axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const std::size_t base = o * ax.extent * ax.inner + in;
      double mx = x[base];
      for (std::size_t c = 1; c < ax.extent; ++c) mx = std::max(mx, x[base + c * ax.inner]);
      double z = 0.0;
      for (std::size_t c = 0; c < ax.extent; ++c) {
        const double e = std::exp(x[base + c * ax.inner] - mx);
        out[base + c * ax.inner] = e;
        z += e;
      }
      for (std::size_t c = 0; c < ax.extent; ++c) out[base + c * ax.inner] /= z;
    }
  }
  return out;
}

Var softmax(Var x, std::size_t axis) {
  const AxisSplit ax = split_axis(x.shape(), axis);
  Tensor out = softmax_values(x.value(), axis);
  return graph_of(x).record(std::move(out), {x}, [x, ax](Graph& g, const Tensor& yv, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t o = 0; o < ax.outer; ++o) {
      for (std::size_t in = 0; in < ax.inner; ++in) {
        const std::size_t base = o * ax.extent * ax.inner + in;
        double dotp = 0.0;
        for (std::size_t c = 0; c < ax.extent; ++c) {
          const std::size_t k = base + c * ax.inner;
          dotp += yv[k] * gy[k];
        }
        for (std::size_t c = 0; c < ax.extent; ++c) {
          const std::size_t k = base + c * ax.inner;
          gx[k] += yv[k] * (gy[k] - dotp);
        }
      }
    }
  });
}

// --- reductions ---------------------------------------------------------------

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return graph_of(x).record(Tensor::scalar(s), {x}, [x](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    const double d = gy[0];
    for (double& v : gx.values()) v += d;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

// --- matmul -------------------------------------------------------------------

namespace {

Tensor transpose2d(const Tensor& a) {
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ArgumentError("matmul: incompatible shapes " + shape_to_string(sa) + " and " +
                        shape_to_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n}, 0.0);
  kernels::active().gemm_nn(m, n, k, a.value().data(), k, b.value().data(), n, out.data(), n);
  return graph_of(a).record(std::move(out), {a, b}, [a, b, m, n, k](Graph& g, const Tensor&, const Tensor& gy) {
    const auto& kt = kernels::active();
    if (g.requires_grad(a)) {
      // dA[m,k] += dC[m,n] * B[k,n]^T
      kt.gemm_nt(m, k, n, gy.data(), n, b.value().data(), n, g.grad_buffer(a).data(), k);
    }
    if (g.requires_grad(b)) {
      const Tensor at = transpose2d(a.value());
      kt.gemm_nn(k, n, m, at.data(), m, gy.data(), n, g.grad_buffer(b).data(), n);
    }
  });
}

// --- conv2d -------------------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t out_plane() const { return oh * ow; }
};

// Output columns [lo, hi) whose input column ox*stride + k - pad is inside [0, w).
std::pair<std::size_t, std::size_t> valid_cols(const ConvGeom& g, std::size_t k) {
  std::size_t lo = 0;
  if (g.pad > k) lo = (g.pad - k + g.stride - 1) / g.stride;
  if (g.w + g.pad <= k) return {0, 0};
  const std::size_t hi = std::min(g.ow, (g.w + g.pad - k - 1) / g.stride + 1);
  return {std::min(lo, hi), hi};
}

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t op = g.out_plane();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * op;
        const auto [lo, hi] = valid_cols(g, kx);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          // lo * stride + kx >= pad, so the index arithmetic below never wraps.
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + (lo + kx - g.pad), src + (hi + kx - g.pad), dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + kx - g.pad];
          }
          std::fill(dst + hi, dst + g.ow, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const std::size_t op = g.out_plane();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * op;
        const auto [lo, hi] = valid_cols(g, kx);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride + kx - g.pad] += src[ox];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1]) {
    throw ArgumentError("conv2d: incompatible input " + shape_to_string(sx) + " and weight " +
                        shape_to_string(sw));
  }
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  if (sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[3]) {
    throw ArgumentError("conv2d: kernel larger than padded input");
  }
  if (bias.valid() && bias.shape() != Shape{sw[0]}) {
    throw ArgumentError("conv2d: bias must have shape [Cout]");
  }
  ConvGeom geo{sx[1], sx[2], sx[3], sw[0], sw[2], sw[3], stride, pad, 0, 0};
  geo.oh = (geo.h + 2 * pad - geo.kh) / stride + 1;
  geo.ow = (geo.w + 2 * pad - geo.kw) / stride + 1;
  const std::size_t n = sx[0];

  Tensor out({n, geo.cout, geo.oh, geo.ow}, 0.0);
  std::vector<double> col(geo.patch() * geo.out_plane());
  const auto& kt = kernels::active();
  const double* xw = w.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x.value().data() + b * geo.cin * geo.h * geo.w, geo, col.data());
    double* ob = out.data() + b * geo.cout * geo.out_plane();
    if (bias.valid()) {
      for (std::size_t o = 0; o < geo.cout; ++o) {
        std::fill(ob + o * geo.out_plane(), ob + (o + 1) * geo.out_plane(), bias.value()[o]);
      }
    }
    kt.gemm_nn(geo.cout, geo.out_plane(), geo.patch(), xw, geo.patch(), col.data(),
               geo.out_plane(), ob, geo.out_plane());
  }

  Graph& g0 = graph_of(x);
  return g0.record(std::move(out), {x, w, bias}, [x, w, bias, geo, n](Graph& g, const Tensor&, const Tensor& gy) {
    const auto& kt = kernels::active();
    const std::size_t op = geo.out_plane();
    const bool need_x = g.requires_grad(x);
    const bool need_w = g.requires_grad(w);
    std::vector<double> col(geo.patch() * op);
    Tensor wt;
    if (need_x) {
      wt = Tensor({geo.patch(), geo.cout});
      const Tensor& wv = w.value();
      for (std::size_t o = 0; o < geo.cout; ++o)
        for (std::size_t p = 0; p < geo.patch(); ++p) wt[p * geo.cout + o] = wv[o * geo.patch() + p];
    }
    double* gw = need_w ? g.grad_buffer(w).data() : nullptr;
    double* gx = need_x ? g.grad_buffer(x).data() : nullptr;
    for (std::size_t b = 0; b < n; ++b) {
      const double* gyb = gy.data() + b * geo.cout * op;
      if (need_w) {
        im2col(x.value().data() + b * geo.cin * geo.h * geo.w, geo, col.data());
        kt.gemm_nt(geo.cout, geo.patch(), op, gyb, op, col.data(), op, gw, geo.patch());
      }
      if (need_x) {
        std::fill(col.begin(), col.end(), 0.0);
        kt.gemm_nn(geo.patch(), op, geo.cout, wt.data(), geo.cout, gyb, op, col.data(), op);
        col2im_add(col.data(), geo, gx + b * geo.cin * geo.h * geo.w);
      }
    }
    if (bias.valid() && g.requires_grad(bias)) {
      Tensor& gb = g.grad_buffer(bias);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < geo.cout; ++o) {
          const double* p = gy.data() + (b * geo.cout + o) * op;
          double s = 0.0;
          for (std::size_t i = 0; i < op; ++i) s += p[i];
          gb[o] += s;
        }
    }
  });
}

// --- resampling ---------------------------------------------------------------

Var upsample_nearest(Var x, std::size_t factor) {
  const Shape& s = x.shape();
  if (s.size() < 2 || factor == 0) throw ArgumentError("upsample_nearest: bad input");
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t planes = x.value().numel() / (h * w);
  Shape os = s;
  os[os.size() - 2] = h * factor;
  os[os.size() - 1] = w * factor;
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor out(os);
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        out[(p * oh + y) * ow + xx] = xv[(p * h + y / factor) * w + xx / factor];
  return graph_of(x).record(std::move(out), {x}, [x, planes, h, w, factor](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    const std::size_t oh = h * factor, ow = w * factor;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          gx[(p * h + y / factor) * w + xx / factor] += gy[(p * oh + y) * ow + xx];
  });
}

BilinearTaps bilinear_taps(std::size_t in, std::size_t out) {
  BilinearTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    t.i0[o] = i0;
    t.i1[o] = i1;
    t.w1[o] = i1 == i0 ? 0.0 : src - static_cast<double>(i0);
  }
  return t;
}

Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w) {
  const Shape& s = x.shape();
  if (s.size() < 2 || out_h == 0 || out_w == 0) throw ArgumentError("upsample_bilinear: bad input");
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t planes = x.value().numel() / (h * w);
  Shape os = s;
  os[os.size() - 2] = out_h;
  os[os.size() - 1] = out_w;
  const BilinearTaps ty = bilinear_taps(h, out_h);
  const BilinearTaps tx = bilinear_taps(w, out_w);
  Tensor out(os);
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double wy = ty.w1[y];
      const double* r0 = src + ty.i0[y] * w;
      const double* r1 = src + ty.i1[y] * w;
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const double wx = tx.w1[xx];
        const double top = r0[tx.i0[xx]] * (1.0 - wx) + r0[tx.i1[xx]] * wx;
        const double bot = r1[tx.i0[xx]] * (1.0 - wx) + r1[tx.i1[xx]] * wx;
        dst[y * out_w + xx] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return graph_of(x).record(std::move(out), {x}, [x, planes, h, w, out_h, out_w, ty, tx](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p) {
      double* dst = gx.data() + p * h * w;
      const double* src = gy.data() + p * out_h * out_w;
      for (std::size_t y = 0; y < out_h; ++y) {
        const double wy = ty.w1[y];
        double* r0 = dst + ty.i0[y] * w;
        double* r1 = dst + ty.i1[y] * w;
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const double wx = tx.w1[xx];
          const double d = src[y * out_w + xx];
          r0[tx.i0[xx]] += d * (1.0 - wy) * (1.0 - wx);
          r0[tx.i1[xx]] += d * (1.0 - wy) * wx;
          r1[tx.i0[xx]] += d * wy * (1.0 - wx);
          r1[tx.i1[xx]] += d * wy * wx;
        }
      }
    }
  });
}

// --- indexing -----------------------------------------------------------------

Var gather_classes(Var x, const LabelMap& index) {
  const Shape& s = x.shape();
  if (s.size() != 4 || index.shape != Shape{s[0], s[2], s[3]}) {
    throw ArgumentError("gather_classes: index shape must be [N,H,W] of x " + shape_to_string(s));
  }
  const std::size_t c = s[1], plane = s[2] * s[3];
  Tensor out({s[0], s[2], s[3]});
  const Tensor& xv = x.value();
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      const int k = index.values[n * plane + p];
      if (k < 0 || static_cast<std::size_t>(k) >= c) {
        throw ArgumentError("gather_classes: index " + std::to_string(k) + " out of range");
      }
      out[n * plane + p] = xv[(n * c + static_cast<std::size_t>(k)) * plane + p];
    }
  return graph_of(x).record(std::move(out), {x}, [x, index, c, plane](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    const std::size_t n_img = gy.numel() / plane;
    for (std::size_t n = 0; n < n_img; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const auto k = static_cast<std::size_t>(index.values[n * plane + p]);
        gx[(n * c + k) * plane + p] += gy[n * plane + p];
      }
  });
}

Var masked_select(Var x, const Tensor& mask) {
  require_same_shape(x.value(), mask, "masked_select");
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (mask[i] != 0.0) picked.push_back(i);
  if (picked.empty()) throw ArgumentError("masked_select: empty selection");
  Tensor out({picked.size()});
  for (std::size_t i = 0; i < picked.size(); ++i) out[i] = x.value()[picked[i]];
  return graph_of(x).record(std::move(out), {x}, [x, picked](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < picked.size(); ++i) gx[picked[i]] += gy[i];
  });
}

Var select_pixels(Var x, const Tensor& mask) {
  const Shape& s = x.shape();
  if (s.size() != 4 || mask.shape() != Shape{s[0], s[2], s[3]}) {
    throw ArgumentError("select_pixels: mask must be [N,H,W] for x " + shape_to_string(s));
  }
  const std::size_t d = s[1], plane = s[2] * s[3];
  std::vector<std::size_t> picked;  // flat (n * plane + p)
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (mask[i] != 0.0) picked.push_back(i);
  if (picked.empty()) throw ArgumentError("select_pixels: empty selection");
  Tensor out({picked.size(), d});
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < picked.size(); ++r) {
    const std::size_t n = picked[r] / plane, p = picked[r] % plane;
    for (std::size_t k = 0; k < d; ++k) out[r * d + k] = xv[(n * d + k) * plane + p];
  }
  return graph_of(x).record(std::move(out), {x}, [x, picked, d, plane](Graph& g, const Tensor&, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t r = 0; r < picked.size(); ++r) {
      const std::size_t n = picked[r] / plane, p = picked[r] % plane;
      for (std::size_t k = 0; k < d; ++k) gx[(n * d + k) * plane + p] += gy[r * d + k];
    }
  });
}

Var cosine_similarity(Var a, Var b, double norm_floor) {
  same_shape(a, b, "cosine_similarity");
  if (a.shape().size() != 2) throw ArgumentError("cosine_similarity: expected [P,D] inputs");
  const std::size_t rows = a.shape()[0], d = a.shape()[1];
  const auto& kt = kernels::active();
  Tensor out({rows});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = av.data() + r * d;
    const double* br = bv.data() + r * d;
    const double na = std::max(std::sqrt(kt.dot(d, ar, ar)), norm_floor);
    const double nb = std::max(std::sqrt(kt.dot(d, br, br)), norm_floor);
    out[r] = kt.dot(d, ar, br) / (na * nb);
  }
  return graph_of(a).record(std::move(out), {a, b}, [a, b, rows, d, norm_floor](Graph& g, const Tensor&, const Tensor& gy) {
    const auto& kt = kernels::active();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool need_a = g.requires_grad(a);
    const bool need_b = g.requires_grad(b);
    double* ga = need_a ? g.grad_buffer(a).data() : nullptr;
    double* gb = need_b ? g.grad_buffer(b).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* ar = av.data() + r * d;
      const double* br = bv.data() + r * d;
      const double ra = std::sqrt(kt.dot(d, ar, ar));
      const double rb = std::sqrt(kt.dot(d, br, br));
      const double na = std::max(ra, norm_floor);
      const double nb = std::max(rb, norm_floor);
      const double ab = kt.dot(d, ar, br);
      const double cosv = ab / (na * nb);
      const double up = gy[r];
      // Floored norms are constants, so their derivative terms vanish.
      const double ka = ra > norm_floor ? cosv / (na * na) : 0.0;
      const double kb = rb > norm_floor ? cosv / (nb * nb) : 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        if (need_a) ga[r * d + k] += up * (br[k] / (na * nb) - ka * ar[k]);
        if (need_b) gb[r * d + k] += up * (ar[k] / (na * nb) - kb * br[k]);
      }
    }
  });
}

}  // namespace fuzzyseg::tk

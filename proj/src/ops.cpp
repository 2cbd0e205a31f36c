// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "promma/errors.hpp"

namespace promma::ops {
namespace {

struct Dims {
  std::size_t r;
  std::size_t c;
};

Dims dims_of(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw DimensionError(std::string(op) + ": expected a vector or matrix, got " +
                       shape_str(t.shape()));
}

// Every kernel accumulates each output element over the reduction index in
// a fixed order that does not depend on the number of rows, so results are
// row-independent and bit-reproducible.

// Register-blocked row kernel: c[0..W) += sum_p a[p] * b[p][0..W), with the
// sum over p taken in order.
template <std::size_t W>
inline void row_block(std::size_t k, const double* __restrict a, const double* __restrict b,
                      std::size_t ldb, double* __restrict c) {
  double acc[W];
  for (std::size_t j = 0; j < W; ++j) acc[j] = c[j];
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* bp = b + p * ldb;
    for (std::size_t j = 0; j < W; ++j) acc[j] += av * bp[j];
  }
  for (std::size_t j = 0; j < W; ++j) c[j] = acc[j];
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * lda;
    double* ci = c + i * ldc;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) row_block<32>(k, ai, b + j, ldb, ci + j);
    for (; j + 16 <= n; j += 16) row_block<16>(k, ai, b + j, ldb, ci + j);
    for (; j + 8 <= n; j += 8) row_block<8>(k, ai, b + j, ldb, ci + j);
    for (; j + 4 <= n; j += 4) row_block<4>(k, ai, b + j, ldb, ci + j);
    for (; j < n; ++j) row_block<1>(k, ai, b + j, ldb, ci + j);
  }
}

// C[m x n] += alpha * A[m x k] * B[n x k]^T. B is transposed into a scratch
// buffer so the same row kernel applies.
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, double alpha = 1.0) {
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * ldb + p];
  }
  if (alpha == 1.0) {
    gemm_nn(m, k, n, a, lda, bt.data(), n, c, ldc);
    return;
  }
  thread_local std::vector<double> tmp;
  tmp.assign(m * n, 0.0);
  gemm_nn(m, k, n, a, lda, bt.data(), n, tmp.data(), n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += alpha * tmp[i * n + j];
  }
}

// C[m x n] += alpha * A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, double alpha = 1.0) {
  thread_local std::vector<double> at;
  at.resize(m * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) at[i * k + p] = alpha * a[p * lda + i];
  }
  gemm_nn(m, k, n, at.data(), k, b, ldb, c, ldc);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void accumulate(Graph& g, std::uint32_t id, const Tensor& src, double alpha = 1.0) {
  if (!g.needs_grad(id)) return;
  Tensor& dst = g.grad_buffer(id);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += alpha * src[i];
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  const auto [m, k] = dims_of(a.value(), "matmul");
  const auto [k2, n] = dims_of(b.value(), "matmul");
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({m, n});
  gemm_nn(m, k, n, a.value().data(), k, b.value().data(), n, out.data(), n);
  const auto ia = a.id, ib = b.id;
  return g.emit(
      std::move(out), {ia, ib},
      [ia, ib, m, k, n](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        if (g.needs_grad(ia)) {
          gemm_nt(m, n, k, dy.data(), n, g.value(ib).data(), n, g.grad_buffer(ia).data(), k);
        }
        if (g.needs_grad(ib)) {
          gemm_tn(k, m, n, g.value(ia).data(), k, dy.data(), n, g.grad_buffer(ib).data(), n);
        }
      },
      "matmul");
}

Var linear(Var x, Var w, Var bias) {
  Graph& g = *x.graph;
  const auto [m, in] = dims_of(x.value(), "linear");
  const auto [in2, out_dim] = dims_of(w.value(), "linear");
  if (in != in2) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  if (bias.value().size() != out_dim) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  Tensor out({m, out_dim});
  const double* bv = bias.value().data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bv, bv + out_dim, out.data() + i * out_dim);
  gemm_nn(m, in, out_dim, x.value().data(), in, w.value().data(), out_dim, out.data(), out_dim);
  const auto ix = x.id, iw = w.id, ib = bias.id;
  return g.emit(
      std::move(out), {ix, iw, ib},
      [ix, iw, ib, m, in, out_dim](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        if (g.needs_grad(ix)) {
          gemm_nt(m, out_dim, in, dy.data(), out_dim, g.value(iw).data(), out_dim,
                  g.grad_buffer(ix).data(), in);
        }
        if (g.needs_grad(iw)) {
          gemm_tn(in, m, out_dim, g.value(ix).data(), in, dy.data(), out_dim,
                  g.grad_buffer(iw).data(), out_dim);
        }
        if (g.needs_grad(ib)) {
          double* db = g.grad_buffer(ib).data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < out_dim; ++j) db[j] += dy[i * out_dim + j];
          }
        }
      },
      "linear");
}

Var linear(Var x, Var w) {
  const auto [in, out_dim] = dims_of(w.value(), "linear");
  (void)in;
  return linear(x, w, x.graph->constant(Tensor({out_dim})));
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->emit(
      std::move(out), {ia, ib},
      [ia, ib](Graph& g, std::uint32_t o) {
        accumulate(g, ia, g.out_grad(o));
        accumulate(g, ib, g.out_grad(o));
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->emit(
      std::move(out), {ia, ib},
      [ia, ib](Graph& g, std::uint32_t o) {
        accumulate(g, ia, g.out_grad(o));
        accumulate(g, ib, g.out_grad(o), -1.0);
      },
      "sub");
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->emit(
      std::move(out), {ia, ib},
      [ia, ib](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        if (g.needs_grad(ia)) {
          Tensor& da = g.grad_buffer(ia);
          const Tensor& bv = g.value(ib);
          for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
        }
        if (g.needs_grad(ib)) {
          Tensor& db = g.grad_buffer(ib);
          const Tensor& av = g.value(ia);
          for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
        }
      },
      "mul");
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  const auto ia = a.id;
  return a.graph->emit(
      std::move(out), {ia},
      [ia, s](Graph& g, std::uint32_t o) { accumulate(g, ia, g.out_grad(o), s); }, "scale");
}

Var add_rowvec(Var a, Var row) {
  const auto [m, n] = dims_of(a.value(), "add_rowvec");
  if (row.value().size() != n) {
    throw DimensionError("add_rowvec: row " + shape_str(row.shape()) + " vs matrix " +
                         shape_str(a.shape()));
  }
  Tensor out = a.value();
  const double* rv = row.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  }
  const auto ia = a.id, ir = row.id;
  return a.graph->emit(
      std::move(out), {ia, ir},
      [ia, ir, m, n](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        accumulate(g, ia, dy);
        if (g.needs_grad(ir)) {
          double* dr = g.grad_buffer(ir).data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) dr[j] += dy[i * n + j];
          }
        }
      },
      "add_rowvec");
}

Var add_leading_rows(Var a, Var r) {
  const auto [m, n] = dims_of(a.value(), "add_leading_rows");
  const auto [mr, nr] = dims_of(r.value(), "add_leading_rows");
  if (n != nr) {
    throw DimensionError("add_leading_rows: " + shape_str(a.shape()) + " vs " +
                         shape_str(r.shape()));
  }
  const std::size_t k = std::min(m, mr);
  Tensor out = a.value();
  const double* rv = r.value().data();
  for (std::size_t i = 0; i < k * n; ++i) out[i] += rv[i];
  const auto ia = a.id, ir = r.id;
  return a.graph->emit(
      std::move(out), {ia, ir},
      [ia, ir, k, n](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        accumulate(g, ia, dy);
        if (g.needs_grad(ir)) {
          double* dr = g.grad_buffer(ir).data();
          for (std::size_t i = 0; i < k * n; ++i) dr[i] += dy[i];
        }
      },
      "add_leading_rows");
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = gelu_value(v);
  const auto ix = x.id;
  return x.graph->emit(
      std::move(out), {ix},
      [ix](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        const Tensor& xv = g.value(ix);
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * gelu_grad(xv[i]);
      },
      "gelu");
}

Var softmax(Var x, int axis) {
  const Tensor& xv = x.value();
  std::size_t m, n;
  if (xv.rank() == 1) {
    if (axis != 0 && axis != -1) throw ConfigError("softmax: axis out of range for a vector");
    m = 1;
    n = xv.size();
  } else if (xv.rank() == 2) {
    if (axis < -1 || axis > 1) throw ConfigError("softmax: axis out of range for a matrix");
    m = xv.shape()[0];
    n = xv.shape()[1];
  } else {
    throw DimensionError("softmax: expected a vector or matrix, got " + shape_str(xv.shape()));
  }
  // Walk slices as (count, length, stride between elements, stride between slices).
  const bool along_rows = xv.rank() == 1 || axis != 0;
  const std::size_t count = along_rows ? m : n;
  const std::size_t len = along_rows ? n : m;
  const std::size_t elem = along_rows ? 1 : n;
  const std::size_t step = along_rows ? n : 1;
  Tensor out(xv.shape());
  for (std::size_t s = 0; s < count; ++s) {
    const double* xs = xv.data() + s * step;
    double* ys = out.data() + s * step;
    double mx = xs[0];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xs[i * elem]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      ys[i * elem] = std::exp(xs[i * elem] - mx);
      total += ys[i * elem];
    }
    for (std::size_t i = 0; i < len; ++i) ys[i * elem] /= total;
  }
  const auto ix = x.id;
  return x.graph->emit(
      std::move(out), {ix},
      [ix, count, len, elem, step](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        const Tensor& y = g.value(o);
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t s = 0; s < count; ++s) {
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t at = s * step + i * elem;
            dot += dy[at] * y[at];
          }
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t at = s * step + i * elem;
            dx[at] += y[at] * (dy[at] - dot);
          }
        }
      },
      "softmax");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const auto [m, n] = dims_of(x.value(), "layer_norm");
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  }
  const Tensor& xv = x.value();
  Tensor out({m, n});
  std::vector<double> xhat(m * n), inv(m);
  const double* gv = gain.value().data();
  const double* bv = bias.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(n);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xi[j] - mu) * inv[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->emit(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, m, n, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        const double* gv = g.value(ig).data();
        if (g.needs_grad(ig)) {
          double* dg = g.grad_buffer(ig).data();
          for (std::size_t i = 0; i < m * n; ++i) dg[i % n] += dy[i] * xhat[i];
        }
        if (g.needs_grad(ib)) {
          double* db = g.grad_buffer(ib).data();
          for (std::size_t i = 0; i < m * n; ++i) db[i % n] += dy[i];
        }
        if (g.needs_grad(ix)) {
          Tensor& dx = g.grad_buffer(ix);
          const double nn = static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = dy[i * n + j] * gv[j];
              s1 += dxh;
              s2 += dxh * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = dy[i * n + j] * gv[j];
              dx[i * n + j] += inv[i] / nn * (nn * dxh - s1 - xhat[i * n + j] * s2);
            }
          }
        }
      },
      "layer_norm");
}

Var attention(Var q, Var k, Var v, std::size_t heads, std::size_t key_offset) {
  const auto [lq, d] = dims_of(q.value(), "attention");
  const auto [lk, dk] = dims_of(k.value(), "attention");
  const auto [lv, dv] = dims_of(v.value(), "attention");
  if (d == 0) throw ConfigError("attention: head dimension is zero");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (dk != d || dv != d || lk != lv) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
  }
  if (key_offset >= lk) throw ContractError("attention: every key is masked");
  const std::size_t dh = d / heads;
  const std::size_t lkk = lk - key_offset;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* kbase = k.value().data() + key_offset * d;
  const double* vbase = v.value().data() + key_offset * d;
  std::vector<double> probs(heads * lq * lkk, 0.0);
  Tensor out({lq, d});
  for (std::size_t h = 0; h < heads; ++h) {
    double* p = probs.data() + h * lq * lkk;
    gemm_nt(lq, dh, lkk, q.value().data() + h * dh, d, kbase + h * dh, d, p, lkk, sc);
    for (std::size_t i = 0; i < lq; ++i) {
      double* row = p + i * lkk;
      double mx = row[0];
      for (std::size_t j = 1; j < lkk; ++j) mx = std::max(mx, row[j]);
      double total = 0.0;
      for (std::size_t j = 0; j < lkk; ++j) {
        row[j] = std::exp(row[j] - mx);
        total += row[j];
      }
      for (std::size_t j = 0; j < lkk; ++j) row[j] /= total;
    }
    gemm_nn(lq, lkk, dh, p, lkk, vbase + h * dh, d, out.data() + h * dh, d);
  }
  const auto iq = q.id, ik = k.id, iv = v.id;
  return q.graph->emit(
      std::move(out), {iq, ik, iv},
      [iq, ik, iv, heads, lq, lkk, d, dh, sc, key_offset, probs = std::move(probs)](
          Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        const double* qv = g.value(iq).data();
        const double* kv = g.value(ik).data() + key_offset * d;
        const double* vv = g.value(iv).data() + key_offset * d;
        double* dq = g.needs_grad(iq) ? g.grad_buffer(iq).data() : nullptr;
        double* dk = g.needs_grad(ik) ? g.grad_buffer(ik).data() + key_offset * d : nullptr;
        double* dv = g.needs_grad(iv) ? g.grad_buffer(iv).data() + key_offset * d : nullptr;
        std::vector<double> ds(lq * lkk);
        for (std::size_t h = 0; h < heads; ++h) {
          const double* p = probs.data() + h * lq * lkk;
          if (dv) gemm_tn(lkk, lq, dh, p, lkk, dy.data() + h * dh, d, dv + h * dh, d);
          if (!dq && !dk) continue;
          std::fill(ds.begin(), ds.end(), 0.0);
          gemm_nt(lq, dh, lkk, dy.data() + h * dh, d, vv + h * dh, d, ds.data(), lkk);
          for (std::size_t i = 0; i < lq; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < lkk; ++j) dot += ds[i * lkk + j] * p[i * lkk + j];
            for (std::size_t j = 0; j < lkk; ++j) {
              ds[i * lkk + j] = p[i * lkk + j] * (ds[i * lkk + j] - dot);
            }
          }
          if (dq) {
            // dq = ds k * sc
            for (std::size_t i = 0; i < lq; ++i) {
              double* dqi = dq + i * d + h * dh;
              for (std::size_t j = 0; j < lkk; ++j) {
                const double w = ds[i * lkk + j] * sc;
                const double* kj = kv + j * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += w * kj[c];
              }
            }
          }
          if (dk) gemm_tn(lkk, lq, dh, ds.data(), lkk, qv + h * dh, d, dk + h * dh, d, sc);
        }
      },
      "attention");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Graph& g = *parts[0].graph;
  const std::size_t n = dims_of(parts[0].value(), "concat_rows").c;
  std::size_t total = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    const auto [r, c] = dims_of(p.value(), "concat_rows");
    if (c != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    offsets.push_back(total * n);
    total += r;
    ids.push_back(p.id);
  }
  Tensor out({total, n});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    std::copy(pv.data(), pv.data() + pv.size(), out.data() + offsets[i]);
  }
  return g.emit(
      std::move(out), ids,
      [ids, offsets](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!g.needs_grad(ids[i])) continue;
          Tensor& d = g.grad_buffer(ids[i]);
          for (std::size_t j = 0; j < d.size(); ++j) d[j] += dy[offsets[i] + j];
        }
      },
      "concat_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Graph& g = *parts[0].graph;
  const std::size_t m = dims_of(parts[0].value(), "concat_cols").r;
  std::size_t total = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets, widths;
  for (const Var& p : parts) {
    const auto [r, c] = dims_of(p.value(), "concat_cols");
    if (r != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    offsets.push_back(total);
    widths.push_back(c);
    total += c;
    ids.push_back(p.id);
  }
  Tensor out({m, total});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy(pv.data() + r * widths[i], pv.data() + (r + 1) * widths[i],
                out.data() + r * total + offsets[i]);
    }
  }
  return g.emit(
      std::move(out), ids,
      [ids, offsets, widths, m, total](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!g.needs_grad(ids[i])) continue;
          Tensor& d = g.grad_buffer(ids[i]);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < widths[i]; ++c) {
              d[r * widths[i] + c] += dy[r * total + offsets[i] + c];
            }
          }
        }
      },
      "concat_cols");
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const auto [m, n] = dims_of(a.value(), "slice_rows");
  if (begin > end || end > m) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of " + shape_str(a.shape()));
  }
  Tensor out({end - begin, n});
  std::copy(a.value().data() + begin * n, a.value().data() + end * n, out.data());
  const auto ia = a.id;
  return a.graph->emit(
      std::move(out), {ia},
      [ia, begin, n](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        double* d = g.grad_buffer(ia).data() + begin * n;
        for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
      },
      "slice_rows");
}

Var mean_rows(Var a, std::size_t begin) {
  const auto [m, n] = dims_of(a.value(), "mean_rows");
  if (begin >= m) throw DimensionError("mean_rows: no rows after offset " + std::to_string(begin));
  const std::size_t cnt = m - begin;
  Tensor out({1, n});
  const double* av = a.value().data();
  for (std::size_t i = begin; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(cnt);
  const auto ia = a.id;
  return a.graph->emit(
      std::move(out), {ia},
      [ia, begin, m, n, cnt](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        Tensor& d = g.grad_buffer(ia);
        const double w = 1.0 / static_cast<double>(cnt);
        for (std::size_t i = begin; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) d[i * n + j] += dy[j] * w;
        }
      },
      "mean_rows");
}

Var tile_rows(Var a, std::size_t rows) {
  const auto [m, n] = dims_of(a.value(), "tile_rows");
  if (m == 0) throw DimensionError("tile_rows: empty input");
  Tensor out({rows, n});
  const double* av = a.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av + (r % m) * n, av + (r % m + 1) * n, out.data() + r * n);
  }
  const auto ia = a.id;
  return a.graph->emit(
      std::move(out), {ia},
      [ia, m, n, rows](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        Tensor& d = g.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) d[(r % m) * n + j] += dy[r * n + j];
        }
      },
      "tile_rows");
}

Var conv1d(Var x, Var kernel, Var bias) {
  const auto [len, din] = dims_of(x.value(), "conv1d");
  const Tensor& kv = kernel.value();
  if (kv.rank() != 3) {
    throw DimensionError("conv1d: kernel must be [w x d_in x d_out], got " +
                         shape_str(kv.shape()));
  }
  const std::size_t w = kv.shape()[0];
  const std::size_t dout = kv.shape()[2];
  if (w % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(w));
  if (kv.shape()[1] != din) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(kv.shape()));
  }
  if (bias.value().size() != dout) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " vs kernel " +
                         shape_str(kv.shape()));
  }
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(w / 2);
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(len);
  // Output rows [t0, t1) read input rows [t0 + s - half, t1 + s - half).
  auto range = [half, L](std::size_t s) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(s) - half;
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - shift);
    return std::tuple{t0, t1, shift};
  };
  Tensor out({len, dout});
  const double* bv = bias.value().data();
  for (std::size_t t = 0; t < len; ++t) std::copy(bv, bv + dout, out.data() + t * dout);
  for (std::size_t s = 0; s < w; ++s) {
    const auto [t0, t1, shift] = range(s);
    if (t1 <= t0) continue;
    gemm_nn(static_cast<std::size_t>(t1 - t0), din, dout,
            x.value().data() + (t0 + shift) * static_cast<std::ptrdiff_t>(din), din,
            kv.data() + s * din * dout, dout, out.data() + t0 * static_cast<std::ptrdiff_t>(dout),
            dout);
  }
  const auto ix = x.id, ik = kernel.id, ib = bias.id;
  return x.graph->emit(
      std::move(out), {ix, ik, ib},
      [ix, ik, ib, w, din, dout, len, range](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        const double* xv = g.value(ix).data();
        const double* kvp = g.value(ik).data();
        for (std::size_t s = 0; s < w; ++s) {
          const auto [t0, t1, shift] = range(s);
          if (t1 <= t0) continue;
          const std::size_t rows = static_cast<std::size_t>(t1 - t0);
          const double* dys = dy.data() + t0 * static_cast<std::ptrdiff_t>(dout);
          if (g.needs_grad(ix)) {
            double* dx = g.grad_buffer(ix).data() + (t0 + shift) * static_cast<std::ptrdiff_t>(din);
            gemm_nt(rows, dout, din, dys, dout, kvp + s * din * dout, dout, dx, din);
          }
          if (g.needs_grad(ik)) {
            double* dk = g.grad_buffer(ik).data() + s * din * dout;
            gemm_tn(din, rows, dout, xv + (t0 + shift) * static_cast<std::ptrdiff_t>(din), din,
                    dys, dout, dk, dout);
          }
        }
        if (g.needs_grad(ib)) {
          double* db = g.grad_buffer(ib).data();
          for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t j = 0; j < dout; ++j) db[j] += dy[t * dout + j];
          }
        }
      },
      "conv1d");
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const auto ia = a.id;
  return a.graph->emit(
      Tensor::scalar(total), {ia},
      [ia](Graph& g, std::uint32_t o) {
        const double s = g.out_grad(o)[0];
        Tensor& d = g.grad_buffer(ia);
        for (double& v : d.values()) v += s;
      },
      "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var abs(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::fabs(v);
  const auto ia = a.id;
  return a.graph->emit(
      std::move(out), {ia},
      [ia](Graph& g, std::uint32_t o) {
        const Tensor& dy = g.out_grad(o);
        const Tensor& av = g.value(ia);
        Tensor& d = g.grad_buffer(ia);
        for (std::size_t i = 0; i < dy.size(); ++i) {
          d[i] += av[i] > 0.0 ? dy[i] : (av[i] < 0.0 ? -dy[i] : 0.0);
        }
      },
      "abs");
}

}  // namespace promma::ops

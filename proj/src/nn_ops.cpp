#include "cmask/nn_ops.hpp"

#include <cmath>
#include <cstring>

#include "cmask/loss.hpp"
#include "cmask/masking.hpp"

namespace cmask {

using detail::Node;
using detail::NodePtr;

namespace {

Tensor finish_op(NodePtr out, std::vector<NodePtr> parents, std::function<void()> backward_fn) {
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (detail::grad_enabled() && any) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(backward_fn);
  }
  return Tensor(out);
}

void require_4d(const Tensor& t, const char* what) {
  if (!t.defined() || t.ndim() != 4) throw ParamError(std::string(what) + ": expected a 4-d tensor");
}

// ---------------------------------------------------------------------------
// Convolution cores.
//
// conv2d and conv_transpose2d and all four of their data/weight gradients are
// the same three index patterns. Name the strided low-resolution side "small"
// and the dense side "big"; every pairing satisfies
//     big_index = small_index * stride + k - pad
// per axis, and the weight is always laid out [small_ch][big_ch][kh][kw]:
//   gather:  small += w * big   (conv forward, convT data gradient)
//   scatter: big   += w * small (convT forward, conv data gradient)
//   wgrad:   dw    += pairing of small with big (both weight gradients)
//
// For speed the big side's columns are split by residue class modulo the
// stride, which turns every inner loop into a unit-stride run.
// ---------------------------------------------------------------------------

struct ConvGeom {
  int N, Cs, Cb;
  int SH, SW;  // small spatial
  int BH, BW;  // big spatial
  int KH, KW;
  int stride, pad;

  size_t small_plane() const { return static_cast<size_t>(SH) * SW; }
  size_t big_plane() const { return static_cast<size_t>(BH) * BW; }
  int phase_width() const { return (BW + stride - 1) / stride; }
};

void row_bounds(const ConvGeom& g, int kh, int* shlo, int* shhi) {
  int lo = g.pad - kh;
  *shlo = lo > 0 ? (lo + g.stride - 1) / g.stride : 0;
  int num = g.BH - 1 + g.pad - kh;
  *shhi = num < 0 ? -1 : std::min(g.SH - 1, num / g.stride);
}

void col_bounds(const ConvGeom& g, int kw, int* solo, int* sohi, int* q, int* dsh) {
  int c0 = kw - g.pad;
  *solo = c0 < 0 ? (-c0 + g.stride - 1) / g.stride : 0;
  int num = g.BW - 1 - c0;
  *sohi = num < 0 ? -1 : std::min(g.SW - 1, num / g.stride);
  int qq = ((c0 % g.stride) + g.stride) % g.stride;
  *q = qq;
  *dsh = (c0 - qq) / g.stride;
}

// phases[q][bh][j] = plane[bh][j*stride + q], zero beyond the last column.
void split_phases(const double* plane, const ConvGeom& g, double* phases) {
  const int PW = g.phase_width();
  for (int q = 0; q < g.stride; ++q) {
    double* ph = phases + static_cast<size_t>(q) * g.BH * PW;
    for (int bh = 0; bh < g.BH; ++bh) {
      const double* src = plane + static_cast<size_t>(bh) * g.BW;
      double* dst = ph + static_cast<size_t>(bh) * PW;
      int j = 0;
      for (int c = q; c < g.BW; c += g.stride) dst[j++] = src[c];
      for (; j < PW; ++j) dst[j] = 0.0;
    }
  }
}

void merge_phases_add(const double* phases, const ConvGeom& g, double* plane) {
  const int PW = g.phase_width();
  for (int q = 0; q < g.stride; ++q) {
    const double* ph = phases + static_cast<size_t>(q) * g.BH * PW;
    for (int bh = 0; bh < g.BH; ++bh) {
      const double* src = ph + static_cast<size_t>(bh) * PW;
      double* dst = plane + static_cast<size_t>(bh) * g.BW;
      int j = 0;
      for (int c = q; c < g.BW; c += g.stride) dst[c] += src[j++];
    }
  }
}

void core_gather(const ConvGeom& g, const double* big, const double* w, double* small) {
  const int PW = g.phase_width();
  std::vector<double> phases(static_cast<size_t>(g.stride) * g.BH * PW);
  for (int n = 0; n < g.N; ++n) {
    for (int cb = 0; cb < g.Cb; ++cb) {
      split_phases(big + (static_cast<size_t>(n) * g.Cb + cb) * g.big_plane(), g, phases.data());
      for (int cs = 0; cs < g.Cs; ++cs) {
        double* sbase = small + (static_cast<size_t>(n) * g.Cs + cs) * g.small_plane();
        const double* wbase = w + (static_cast<size_t>(cs) * g.Cb + cb) * g.KH * g.KW;
        for (int kh = 0; kh < g.KH; ++kh) {
          int shlo, shhi;
          row_bounds(g, kh, &shlo, &shhi);
          for (int kw = 0; kw < g.KW; ++kw) {
            int solo, sohi, q, dsh;
            col_bounds(g, kw, &solo, &sohi, &q, &dsh);
            if (sohi < solo) continue;
            const double w0 = wbase[kh * g.KW + kw];
            for (int sh = shlo; sh <= shhi; ++sh) {
              const int bh = sh * g.stride + kh - g.pad;
              double* srow = sbase + static_cast<size_t>(sh) * g.SW;
              const double* prow =
                  phases.data() + (static_cast<size_t>(q) * g.BH + bh) * PW + dsh;
              for (int so = solo; so <= sohi; ++so) srow[so] += w0 * prow[so];
            }
          }
        }
      }
    }
  }
}

void core_scatter(const ConvGeom& g, const double* small, const double* w, double* big) {
  const int PW = g.phase_width();
  std::vector<double> acc(static_cast<size_t>(g.stride) * g.BH * PW);
  for (int n = 0; n < g.N; ++n) {
    for (int cb = 0; cb < g.Cb; ++cb) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int cs = 0; cs < g.Cs; ++cs) {
        const double* sbase = small + (static_cast<size_t>(n) * g.Cs + cs) * g.small_plane();
        const double* wbase = w + (static_cast<size_t>(cs) * g.Cb + cb) * g.KH * g.KW;
        for (int kh = 0; kh < g.KH; ++kh) {
          int shlo, shhi;
          row_bounds(g, kh, &shlo, &shhi);
          for (int kw = 0; kw < g.KW; ++kw) {
            int solo, sohi, q, dsh;
            col_bounds(g, kw, &solo, &sohi, &q, &dsh);
            if (sohi < solo) continue;
            const double w0 = wbase[kh * g.KW + kw];
            for (int sh = shlo; sh <= shhi; ++sh) {
              const int bh = sh * g.stride + kh - g.pad;
              const double* srow = sbase + static_cast<size_t>(sh) * g.SW;
              double* arow = acc.data() + (static_cast<size_t>(q) * g.BH + bh) * PW + dsh;
              for (int so = solo; so <= sohi; ++so) arow[so] += w0 * srow[so];
            }
          }
        }
      }
      merge_phases_add(acc.data(), g, big + (static_cast<size_t>(n) * g.Cb + cb) * g.big_plane());
    }
  }
}

void core_wgrad(const ConvGeom& g, const double* small, const double* big, double* dw) {
  const int PW = g.phase_width();
  std::vector<double> phases(static_cast<size_t>(g.stride) * g.BH * PW);
  for (int n = 0; n < g.N; ++n) {
    for (int cb = 0; cb < g.Cb; ++cb) {
      split_phases(big + (static_cast<size_t>(n) * g.Cb + cb) * g.big_plane(), g, phases.data());
      for (int cs = 0; cs < g.Cs; ++cs) {
        const double* sbase = small + (static_cast<size_t>(n) * g.Cs + cs) * g.small_plane();
        double* wbase = dw + (static_cast<size_t>(cs) * g.Cb + cb) * g.KH * g.KW;
        for (int kh = 0; kh < g.KH; ++kh) {
          int shlo, shhi;
          row_bounds(g, kh, &shlo, &shhi);
          for (int kw = 0; kw < g.KW; ++kw) {
            int solo, sohi, q, dsh;
            col_bounds(g, kw, &solo, &sohi, &q, &dsh);
            if (sohi < solo) continue;
            double accum = 0.0;
            for (int sh = shlo; sh <= shhi; ++sh) {
              const int bh = sh * g.stride + kh - g.pad;
              const double* srow = sbase + static_cast<size_t>(sh) * g.SW;
              const double* prow =
                  phases.data() + (static_cast<size_t>(q) * g.BH + bh) * PW + dsh;
              for (int so = solo; so <= sohi; ++so) accum += srow[so] * prow[so];
            }
            wbase[kh * g.KW + kw] += accum;
          }
        }
      }
    }
  }
}

// tanh(r)/r and its derivative. The direct derivative formula
// ((1 - tanh^2 r) r - tanh r) / r^2 cancels catastrophically for small r, so
// switch to the series there.
void tanh_ratio(double r, double* f, double* df) {
  if (r < 1e-3) {
    double r2 = r * r;
    *f = 1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0;
    *df = -2.0 * r / 3.0 + 8.0 * r2 * r / 15.0;
  } else {
    double t = std::tanh(r);
    *f = t / r;
    *df = ((1.0 - t * t) * r - t) / (r * r);
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  require_4d(x, "conv2d");
  require_4d(w, "conv2d weight");
  if (b.ndim() != 1) throw ParamError("conv2d: bias must be 1-d");
  if (stride < 1 || padding < 0) throw ParamError("conv2d: bad stride or padding");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != Cin) throw ParamError("conv2d: weight input channels mismatch");
  if (b.dim(0) != Cout) throw ParamError("conv2d: bias size mismatch");
  if (H + 2 * padding < KH || W + 2 * padding < KW)
    throw ParamError("conv2d: kernel exceeds padded input");
  const int OH = (H + 2 * padding - KH) / stride + 1;
  const int OW = (W + 2 * padding - KW) / stride + 1;

  ConvGeom g{N, Cout, Cin, OH, OW, H, W, KH, KW, stride, padding};
  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  NodePtr out = detail::make_node({N, Cout, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      double* plane = out->value.data() + (static_cast<size_t>(n) * Cout + co) * g.small_plane();
      std::fill(plane, plane + g.small_plane(), bn->value[co]);
    }
  core_gather(g, xn->value.data(), wn->value.data(), out->value.data());

  Node* self = out.get();
  return finish_op(out, {xn, wn, bn}, [self, xn, wn, bn, g]() {
    const double* dy = self->grad.data();
    if (xn->requires_grad) core_scatter(g, dy, wn->value.data(), xn->ensure_grad().data());
    if (wn->requires_grad) core_wgrad(g, dy, xn->value.data(), wn->ensure_grad().data());
    if (bn->requires_grad) {
      auto& db = bn->ensure_grad();
      for (int n = 0; n < g.N; ++n)
        for (int co = 0; co < g.Cs; ++co) {
          const double* plane = dy + (static_cast<size_t>(n) * g.Cs + co) * g.small_plane();
          double s = 0.0;
          for (size_t i = 0; i < g.small_plane(); ++i) s += plane[i];
          db[co] += s;
        }
    }
  });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int output_padding) {
  require_4d(x, "conv_transpose2d");
  require_4d(w, "conv_transpose2d weight");
  if (b.ndim() != 1) throw ParamError("conv_transpose2d: bias must be 1-d");
  if (stride < 1 || padding < 0) throw ParamError("conv_transpose2d: bad stride or padding");
  if (output_padding < 0 || output_padding >= stride)
    throw ParamError("conv_transpose2d: output_padding must be in [0, stride)");
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(0) != Cin) throw ParamError("conv_transpose2d: weight input channels mismatch");
  if (b.dim(0) != Cout) throw ParamError("conv_transpose2d: bias size mismatch");
  const int OH = (H - 1) * stride - 2 * padding + KH + output_padding;
  const int OW = (W - 1) * stride - 2 * padding + KW + output_padding;
  if (OH < 1 || OW < 1) throw ParamError("conv_transpose2d: empty output");

  ConvGeom g{N, Cin, Cout, H, W, OH, OW, KH, KW, stride, padding};
  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  NodePtr out = detail::make_node({N, Cout, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      double* plane = out->value.data() + (static_cast<size_t>(n) * Cout + co) * g.big_plane();
      std::fill(plane, plane + g.big_plane(), bn->value[co]);
    }
  core_scatter(g, xn->value.data(), wn->value.data(), out->value.data());

  Node* self = out.get();
  return finish_op(out, {xn, wn, bn}, [self, xn, wn, bn, g]() {
    const double* dy = self->grad.data();
    if (xn->requires_grad) core_gather(g, dy, wn->value.data(), xn->ensure_grad().data());
    if (wn->requires_grad) core_wgrad(g, xn->value.data(), dy, wn->ensure_grad().data());
    if (bn->requires_grad) {
      auto& db = bn->ensure_grad();
      for (int n = 0; n < g.N; ++n)
        for (int co = 0; co < g.Cb; ++co) {
          const double* plane = dy + (static_cast<size_t>(n) * g.Cb + co) * g.big_plane();
          double s = 0.0;
          for (size_t i = 0; i < g.big_plane(); ++i) s += plane[i];
          db[co] += s;
        }
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum, double eps) {
  require_4d(x, "batch_norm");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C)
    throw ParamError("batch_norm: gamma/beta must be [C]");
  if (static_cast<int>(state.running_mean.size()) != C)
    throw ParamError("batch_norm: state channel mismatch");
  const size_t plane = static_cast<size_t>(H) * W;
  const size_t cnt = static_cast<size_t>(N) * plane;

  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  NodePtr out = detail::make_node(x.shape());

  std::vector<double> mu(C), inv_s(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xn->value.data() + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) s += p[i];
      }
      double m = s / static_cast<double>(cnt);
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xn->value.data() + (static_cast<size_t>(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          double d = p[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(cnt);
      mu[c] = m;
      inv_s[c] = 1.0 / std::sqrt(v + eps);
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * m;
      double unbiased = cnt > 1 ? v * static_cast<double>(cnt) / static_cast<double>(cnt - 1) : v;
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mu[c] = state.running_mean[c];
      inv_s[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
    }
  }

  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* src = xn->value.data() + (static_cast<size_t>(n) * C + c) * plane;
      double* dst = out->value.data() + (static_cast<size_t>(n) * C + c) * plane;
      const double a = gn->value[c] * inv_s[c];
      const double d = bn->value[c] - a * mu[c];
      for (size_t i = 0; i < plane; ++i) dst[i] = a * src[i] + d;
    }
  }

  Node* self = out.get();
  return finish_op(
      out, {xn, gn, bn},
      [self, xn, gn, bn, mu, inv_s, training, N, C, plane, cnt]() {
        const double* dy = self->grad.data();
        for (int c = 0; c < C; ++c) {
          // Channel sums of dy and of dy * xhat feed all three gradients.
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * plane;
            const double* dyp = dy + off;
            const double* xp = xn->value.data() + off;
            for (size_t i = 0; i < plane; ++i) {
              sum_dy += dyp[i];
              sum_dy_xhat += dyp[i] * (xp[i] - mu[c]) * inv_s[c];
            }
          }
          if (bn->requires_grad) bn->ensure_grad()[c] += sum_dy;
          if (gn->requires_grad) gn->ensure_grad()[c] += sum_dy_xhat;
          if (xn->requires_grad) {
            auto& gx = xn->ensure_grad();
            const double a = gn->value[c] * inv_s[c];
            if (training) {
              const double mean_dy = sum_dy / static_cast<double>(cnt);
              const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(cnt);
              for (int n = 0; n < N; ++n) {
                const size_t off = (static_cast<size_t>(n) * C + c) * plane;
                const double* dyp = dy + off;
                const double* xp = xn->value.data() + off;
                double* gxp = gx.data() + off;
                for (size_t i = 0; i < plane; ++i) {
                  double xhat = (xp[i] - mu[c]) * inv_s[c];
                  gxp[i] += a * (dyp[i] - mean_dy - xhat * mean_dy_xhat);
                }
              }
            } else {
              for (int n = 0; n < N; ++n) {
                const size_t off = (static_cast<size_t>(n) * C + c) * plane;
                const double* dyp = dy + off;
                double* gxp = gx.data() + off;
                for (size_t i = 0; i < plane; ++i) gxp[i] += a * dyp[i];
              }
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  NodePtr xn = x.node();
  if (!xn) throw ParamError("relu: undefined tensor");
  NodePtr out = detail::make_node(xn->shape);
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xn->value[i] > 0.0 ? xn->value[i] : 0.0;
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn]() {
    auto& g = xn->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i)
      if (xn->value[i] > 0.0) g[i] += self->grad[i];
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  NodePtr xn = x.node();
  if (!xn) throw ParamError("leaky_relu: undefined tensor");
  NodePtr out = detail::make_node(xn->shape);
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = xn->value[i] > 0.0 ? xn->value[i] : slope * xn->value[i];
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn, slope]() {
    auto& g = xn->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i)
      g[i] += self->grad[i] * (xn->value[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor sigmoid_op(const Tensor& x) {
  NodePtr xn = x.node();
  if (!xn) throw ParamError("sigmoid_op: undefined tensor");
  NodePtr out = detail::make_node(xn->shape);
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = sigmoid(xn->value[i]);
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn]() {
    auto& g = xn->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      double y = self->value[i];
      g[i] += self->grad[i] * y * (1.0 - y);
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ParamError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  NodePtr xn = x.node();
  if (!xn) throw ParamError("dropout: undefined tensor");
  NodePtr out = detail::make_node(xn->shape);
  std::vector<double> keep(out->value.size());
  const double inv_keep = 1.0 / (1.0 - p);
  for (size_t i = 0; i < keep.size(); ++i) {
    keep[i] = rng.uniform() < p ? 0.0 : inv_keep;
    out->value[i] = xn->value[i] * keep[i];
  }
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn, keep = std::move(keep)]() {
    auto& g = xn->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * keep[i];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_4d(a, "concat_channels");
  require_4d(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ParamError("concat_channels: non-channel dims must match");
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = detail::make_node({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    double* dst = out->value.data() + static_cast<size_t>(n) * (Ca + Cb) * plane;
    std::memcpy(dst, an->value.data() + static_cast<size_t>(n) * Ca * plane,
                Ca * plane * sizeof(double));
    std::memcpy(dst + Ca * plane, bn->value.data() + static_cast<size_t>(n) * Cb * plane,
                Cb * plane * sizeof(double));
  }
  Node* self = out.get();
  return finish_op(out, {an, bn}, [self, an, bn, N, Ca, Cb, plane]() {
    for (int n = 0; n < N; ++n) {
      const double* gsrc = self->grad.data() + static_cast<size_t>(n) * (Ca + Cb) * plane;
      if (an->requires_grad) {
        double* g = an->ensure_grad().data() + static_cast<size_t>(n) * Ca * plane;
        for (size_t i = 0; i < Ca * plane; ++i) g[i] += gsrc[i];
      }
      if (bn->requires_grad) {
        double* g = bn->ensure_grad().data() + static_cast<size_t>(n) * Cb * plane;
        for (size_t i = 0; i < Cb * plane; ++i) g[i] += gsrc[Ca * plane + i];
      }
    }
  });
}

Tensor crop_hw(const Tensor& x, int new_h, int new_w) {
  require_4d(x, "crop_hw");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (new_h < 1 || new_h > H || new_w < 1 || new_w > W)
    throw ParamError("crop_hw: crop size out of range");
  NodePtr xn = x.node();
  NodePtr out = detail::make_node({N, C, new_h, new_w});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < new_h; ++h) {
        const double* src =
            xn->value.data() + ((static_cast<size_t>(n) * C + c) * H + h) * W;
        double* dst =
            out->value.data() + ((static_cast<size_t>(n) * C + c) * new_h + h) * new_w;
        std::memcpy(dst, src, static_cast<size_t>(new_w) * sizeof(double));
      }
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn, N, C, H, W, new_h, new_w]() {
    auto& g = xn->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < new_h; ++h) {
          const double* gsrc =
              self->grad.data() + ((static_cast<size_t>(n) * C + c) * new_h + h) * new_w;
          double* gdst = g.data() + ((static_cast<size_t>(n) * C + c) * H + h) * W;
          for (int w = 0; w < new_w; ++w) gdst[w] += gsrc[w];
        }
  });
}

namespace {
void require_2ch(const Tensor& t, const char* what) {
  require_4d(t, what);
  if (t.dim(1) != 2) throw ParamError(std::string(what) + ": expected 2 channels (re, im)");
}
}  // namespace

Tensor complex_mask_compress(const Tensor& raw) {
  require_2ch(raw, "complex_mask_compress");
  const int N = raw.dim(0), H = raw.dim(2), W = raw.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  NodePtr xn = raw.node();
  NodePtr out = detail::make_node(raw.shape());
  for (int n = 0; n < N; ++n) {
    const double* re = xn->value.data() + static_cast<size_t>(n) * 2 * plane;
    const double* im = re + plane;
    double* ore = out->value.data() + static_cast<size_t>(n) * 2 * plane;
    double* oim = ore + plane;
    for (size_t i = 0; i < plane; ++i) {
      double r = std::hypot(re[i], im[i]);
      if (r < kEpsGuard) {
        ore[i] = 0.0;
        oim[i] = 0.0;
      } else {
        double f, df;
        tanh_ratio(r, &f, &df);
        ore[i] = f * re[i];
        oim[i] = f * im[i];
      }
    }
  }
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn, N, plane]() {
    auto& g = xn->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const size_t off = static_cast<size_t>(n) * 2 * plane;
      const double* re = xn->value.data() + off;
      const double* im = re + plane;
      const double* gre = self->grad.data() + off;
      const double* gim = gre + plane;
      double* dre = g.data() + off;
      double* dim = dre + plane;
      for (size_t i = 0; i < plane; ++i) {
        double r = std::hypot(re[i], im[i]);
        if (r < kEpsGuard) continue;  // flat (zeroed) region
        double f, df;
        tanh_ratio(r, &f, &df);
        // d(f(r) o_c)/d o_d = f delta_cd + o_c o_d f'(r)/r.
        double k = df / r;
        dre[i] += gre[i] * (f + re[i] * re[i] * k) + gim[i] * (re[i] * im[i] * k);
        dim[i] += gim[i] * (f + im[i] * im[i] * k) + gre[i] * (re[i] * im[i] * k);
      }
    }
  });
}

Tensor complex_mul(const Tensor& a, const Tensor& b) {
  require_2ch(a, "complex_mul");
  require_2ch(b, "complex_mul");
  if (a.shape() != b.shape()) throw ParamError("complex_mul: shape mismatch");
  const int N = a.dim(0), H = a.dim(2), W = a.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = detail::make_node(a.shape());
  for (int n = 0; n < N; ++n) {
    const size_t off = static_cast<size_t>(n) * 2 * plane;
    const double* ar = an->value.data() + off;
    const double* ai = ar + plane;
    const double* br = bn->value.data() + off;
    const double* bi = br + plane;
    double* yr = out->value.data() + off;
    double* yi = yr + plane;
    for (size_t i = 0; i < plane; ++i) {
      yr[i] = ar[i] * br[i] - ai[i] * bi[i];
      yi[i] = ar[i] * bi[i] + ai[i] * br[i];
    }
  }
  Node* self = out.get();
  return finish_op(out, {an, bn}, [self, an, bn, N, plane]() {
    for (int n = 0; n < N; ++n) {
      const size_t off = static_cast<size_t>(n) * 2 * plane;
      const double* gr = self->grad.data() + off;
      const double* gi = gr + plane;
      if (an->requires_grad) {
        const double* br = bn->value.data() + off;
        const double* bi = br + plane;
        double* dar = an->ensure_grad().data() + off;
        double* dai = dar + plane;
        for (size_t i = 0; i < plane; ++i) {
          dar[i] += gr[i] * br[i] + gi[i] * bi[i];
          dai[i] += -gr[i] * bi[i] + gi[i] * br[i];
        }
      }
      if (bn->requires_grad) {
        const double* ar = an->value.data() + off;
        const double* ai = ar + plane;
        double* dbr = bn->ensure_grad().data() + off;
        double* dbi = dbr + plane;
        for (size_t i = 0; i < plane; ++i) {
          dbr[i] += gr[i] * ar[i] + gi[i] * ai[i];
          dbi[i] += -gr[i] * ai[i] + gi[i] * ar[i];
        }
      }
    }
  });
}

Tensor real_mask_apply(const Tensor& mask, const Tensor& spec) {
  require_4d(mask, "real_mask_apply");
  require_2ch(spec, "real_mask_apply");
  if (mask.dim(1) != 1 || mask.dim(0) != spec.dim(0) || mask.dim(2) != spec.dim(2) ||
      mask.dim(3) != spec.dim(3))
    throw ParamError("real_mask_apply: mask must be [N,1,H,W] matching the spectrum");
  const int N = spec.dim(0), H = spec.dim(2), W = spec.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  NodePtr mn = mask.node(), sn = spec.node();
  NodePtr out = detail::make_node(spec.shape());
  for (int n = 0; n < N; ++n) {
    const double* m = mn->value.data() + static_cast<size_t>(n) * plane;
    for (int c = 0; c < 2; ++c) {
      const double* src = sn->value.data() + (static_cast<size_t>(n) * 2 + c) * plane;
      double* dst = out->value.data() + (static_cast<size_t>(n) * 2 + c) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] = m[i] * src[i];
    }
  }
  Node* self = out.get();
  return finish_op(out, {mn, sn}, [self, mn, sn, N, plane]() {
    for (int n = 0; n < N; ++n) {
      if (mn->requires_grad) {
        double* gm = mn->ensure_grad().data() + static_cast<size_t>(n) * plane;
        for (int c = 0; c < 2; ++c) {
          const size_t off = (static_cast<size_t>(n) * 2 + c) * plane;
          const double* gy = self->grad.data() + off;
          const double* sv = sn->value.data() + off;
          for (size_t i = 0; i < plane; ++i) gm[i] += gy[i] * sv[i];
        }
      }
      if (sn->requires_grad) {
        const double* m = mn->value.data() + static_cast<size_t>(n) * plane;
        for (int c = 0; c < 2; ++c) {
          const size_t off = (static_cast<size_t>(n) * 2 + c) * plane;
          const double* gy = self->grad.data() + off;
          double* gs = sn->ensure_grad().data() + off;
          for (size_t i = 0; i < plane; ++i) gs[i] += gy[i] * m[i];
        }
      }
    }
  });
}

Tensor complex_magnitude(const Tensor& est) {
  require_2ch(est, "complex_magnitude");
  const int N = est.dim(0), H = est.dim(2), W = est.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  NodePtr xn = est.node();
  NodePtr out = detail::make_node({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    const double* re = xn->value.data() + static_cast<size_t>(n) * 2 * plane;
    const double* im = re + plane;
    double* dst = out->value.data() + static_cast<size_t>(n) * plane;
    for (size_t i = 0; i < plane; ++i) dst[i] = std::hypot(re[i], im[i]);
  }
  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn, N, plane]() {
    auto& g = xn->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const double* re = xn->value.data() + static_cast<size_t>(n) * 2 * plane;
      const double* im = re + plane;
      const double* gy = self->grad.data() + static_cast<size_t>(n) * plane;
      const double* mag = self->value.data() + static_cast<size_t>(n) * plane;
      double* dre = g.data() + static_cast<size_t>(n) * 2 * plane;
      double* dim = dre + plane;
      for (size_t i = 0; i < plane; ++i) {
        double denom = std::max(mag[i], kEpsGuard);
        dre[i] += gy[i] * re[i] / denom;
        dim[i] += gy[i] * im[i] / denom;
      }
    }
  });
}

Tensor istft_batch(const Tensor& est, const StftParams& p, long out_length) {
  require_2ch(est, "istft_batch");
  p.validate();
  const int N = est.dim(0), F = est.dim(2), K = est.dim(3);
  if (K != p.num_bins()) throw ParamError("istft_batch: bin count mismatch");
  if (p.num_frames(out_length) != F)
    throw ParamError("istft_batch: out_length inconsistent with frame count");
  const size_t plane = static_cast<size_t>(F) * K;
  NodePtr xn = est.node();
  NodePtr out = detail::make_node({N, static_cast<int>(out_length)});

  for (int n = 0; n < N; ++n) {
    Spectrogram s;
    s.params = p;
    s.bins = ComplexMat(F, K);
    const double* re = xn->value.data() + static_cast<size_t>(n) * 2 * plane;
    const double* im = re + plane;
    for (int t = 0; t < F; ++t)
      for (int k = 0; k < K; ++k)
        s.bins(t, k) = {re[static_cast<size_t>(t) * K + k], im[static_cast<size_t>(t) * K + k]};
    Waveform w = istft(s, out_length);
    std::copy(w.samples.begin(), w.samples.end(),
              out->value.begin() + static_cast<size_t>(n) * out_length);
  }

  Node* self = out.get();
  return finish_op(out, {xn}, [self, xn, p, out_length, N, F, K, plane]() {
    const int W = p.window_size, H = p.hop_size;
    const std::vector<double> win = hann_window(W);
    const size_t padded = static_cast<size_t>(F - 1) * H + W;
    std::vector<double> wsum(padded, 0.0);
    for (int t = 0; t < F; ++t)
      for (int n = 0; n < W; ++n)
        wsum[static_cast<size_t>(t) * H + n] += win[n] * win[n];

    std::vector<double> gp(padded), g_frame(W);
    std::vector<std::complex<double>> spec(K);
    auto& gx = xn->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const double* gy = self->grad.data() + static_cast<size_t>(n) * out_length;
      // Push the per-sample normalization back, then window each frame and
      // take the forward transform: the exact adjoint of the synthesis pass.
      std::fill(gp.begin(), gp.end(), 0.0);
      for (long i = 0; i < out_length; ++i) {
        size_t q = static_cast<size_t>(W / 2 + i);
        if (wsum[q] > 1e-12) gp[q] = gy[i] / wsum[q];
      }
      double* dre = gx.data() + static_cast<size_t>(n) * 2 * plane;
      double* dim = dre + plane;
      for (int t = 0; t < F; ++t) {
        const double* gpt = gp.data() + static_cast<size_t>(t) * H;
        for (int m = 0; m < W; ++m) g_frame[m] = win[m] * gpt[m];
        rfft(g_frame.data(), W, spec.data());
        for (int k = 0; k < K; ++k) {
          double ck = (k == 0 || k == K - 1) ? 1.0 : 2.0;
          dre[static_cast<size_t>(t) * K + k] += ck / W * spec[k].real();
          if (k != 0 && k != K - 1)
            dim[static_cast<size_t>(t) * K + k] += ck / W * spec[k].imag();
        }
      }
    }
  });
}

Tensor l1_loss_const(const Tensor& a, const std::vector<double>& target) {
  NodePtr an = a.node();
  if (!an) throw ParamError("l1_loss_const: undefined tensor");
  if (an->value.size() != target.size() || target.empty())
    throw ParamError("l1_loss_const: target size mismatch");
  NodePtr out = detail::make_node({});
  double s = 0.0;
  for (size_t i = 0; i < target.size(); ++i) s += std::abs(an->value[i] - target[i]);
  out->value[0] = s / static_cast<double>(target.size());
  Node* self = out.get();
  return finish_op(out, {an}, [self, an, target]() {
    auto& g = an->ensure_grad();
    const double inv_n = 1.0 / static_cast<double>(g.size());
    for (size_t i = 0; i < g.size(); ++i) {
      double d = an->value[i] - target[i];
      if (d > 0.0)
        g[i] += self->grad[0] * inv_n;
      else if (d < 0.0)
        g[i] -= self->grad[0] * inv_n;
    }
  });
}

Tensor sdr_loss_batch(const Tensor& waves, const std::vector<std::vector<double>>& targets) {
  NodePtr wn = waves.node();
  if (!wn || waves.ndim() != 2) throw ParamError("sdr_loss_batch: expected [N, L] waves");
  const int N = waves.dim(0);
  const size_t L = static_cast<size_t>(waves.dim(1));
  if (static_cast<int>(targets.size()) != N) throw ParamError("sdr_loss_batch: target count");
  for (const auto& t : targets)
    if (t.size() != L) throw ParamError("sdr_loss_batch: target length mismatch");

  NodePtr out = detail::make_node({});
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    std::vector<double> row(wn->value.begin() + static_cast<size_t>(n) * L,
                            wn->value.begin() + static_cast<size_t>(n + 1) * L);
    total += sdr_loss(row, targets[n]);
  }
  out->value[0] = total / N;

  Node* self = out.get();
  return finish_op(out, {wn}, [self, wn, targets, N, L]() {
    auto& g = wn->ensure_grad();
    const double w = self->grad[0] / N;
    for (int n = 0; n < N; ++n) {
      std::vector<double> row(wn->value.begin() + static_cast<size_t>(n) * L,
                              wn->value.begin() + static_cast<size_t>(n + 1) * L);
      std::vector<double> gr = sdr_loss_grad(row, targets[n]);
      double* dst = g.data() + static_cast<size_t>(n) * L;
      for (size_t i = 0; i < L; ++i) dst[i] += w * gr[i];
    }
  });
}

}  // namespace cmask

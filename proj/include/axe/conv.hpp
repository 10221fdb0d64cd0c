#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "axe/ops.hpp"
#include "axe/tensor.hpp"

namespace axe {

inline int conv_out_extent(int in, int pad, int k, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Lowers one channel group of a B x Cin x H x W batch into a
// [Cg*kh*kw] x [B*Hp*Wp] matrix (row-major), zero-padding out-of-range taps.
template <typename S>
void im2col_group(const S* x, int B, int Cin, int H, int W, int ch_base, int Cg, int kh, int kw,
                  int stride, int pad, int Hp, int Wp, S* col) {
  const std::int64_t P = static_cast<std::int64_t>(Hp) * Wp;
  const std::int64_t cols = static_cast<std::int64_t>(B) * P;
  for (int ic = 0; ic < Cg; ++ic) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const std::int64_t r = (static_cast<std::int64_t>(ic) * kh + ky) * kw + kx;
        S* dst_row = col + r * cols;
        for (int b = 0; b < B; ++b) {
          const S* src_plane = x + ((static_cast<std::int64_t>(b) * Cin + ch_base + ic) * H) * W;
          S* dst = dst_row + static_cast<std::int64_t>(b) * P;
          for (int oy = 0; oy < Hp; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) {
              for (int ox = 0; ox < Wp; ++ox) dst[oy * Wp + ox] = S(0);
              continue;
            }
            const S* src = src_plane + static_cast<std::int64_t>(iy) * W;
            for (int ox = 0; ox < Wp; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[oy * Wp + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
            }
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds a column matrix back into image layout.
template <typename S>
void col2im_group(const S* col, int B, int Cin, int H, int W, int ch_base, int Cg, int kh, int kw,
                  int stride, int pad, int Hp, int Wp, S* dx) {
  const std::int64_t P = static_cast<std::int64_t>(Hp) * Wp;
  const std::int64_t cols = static_cast<std::int64_t>(B) * P;
  for (int ic = 0; ic < Cg; ++ic) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const std::int64_t r = (static_cast<std::int64_t>(ic) * kh + ky) * kw + kx;
        const S* src_row = col + r * cols;
        for (int b = 0; b < B; ++b) {
          S* dst_plane = dx + ((static_cast<std::int64_t>(b) * Cin + ch_base + ic) * H) * W;
          const S* src = src_row + static_cast<std::int64_t>(b) * P;
          for (int oy = 0; oy < Hp; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            S* dst = dst_plane + static_cast<std::int64_t>(iy) * W;
            for (int ox = 0; ox < Wp; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) dst[ix] += src[oy * Wp + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// Grouped 2-d convolution. Output group i depends only on input channels of
// group i; gradients are registered for input, weight, and bias.
template <typename S>
Var<S> conv2d(Var<S> input, Var<S> weight, Var<S> bias, int stride, int padding, int groups) {
  Tape<S>& t = detail::same_tape(input, weight);
  detail::same_tape(input, bias);
  const Array<S>& xv = t.value(input);
  const Array<S>& wv = t.value(weight);
  const Array<S>& bv = t.value(bias);
  check(xv.rank() == 4, "conv2d: input must be BxCxHxW, got " + shape_str(xv.shape));
  check(wv.rank() == 4, "conv2d: weight must be Cout x Cin/g x kh x kw");
  check(bv.rank() == 1, "conv2d: bias must be rank 1");
  check(stride >= 1 && padding >= 0 && groups >= 1, "conv2d: invalid stride/padding/groups");

  const int B = xv.shape[0], Cin = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  const int Cout = wv.shape[0], Cg = wv.shape[1], kh = wv.shape[2], kw = wv.shape[3];
  check(Cin % groups == 0, "conv2d: Cin=" + std::to_string(Cin) + " not divisible by groups=" + std::to_string(groups));
  check(Cout % groups == 0, "conv2d: Cout=" + std::to_string(Cout) + " not divisible by groups=" + std::to_string(groups));
  check(Cg == Cin / groups, "conv2d: weight channel extent " + std::to_string(Cg) + " != Cin/groups");
  check(bv.shape[0] == Cout, "conv2d: bias extent mismatch");
  check(H + 2 * padding >= kh && W + 2 * padding >= kw, "conv2d: kernel does not fit padded input");

  const int Hp = conv_out_extent(H, padding, kh, stride);
  const int Wp = conv_out_extent(W, padding, kw, stride);
  const int Coutg = Cout / groups;
  const std::int64_t P = static_cast<std::int64_t>(Hp) * Wp;
  const std::int64_t K = static_cast<std::int64_t>(Cg) * kh * kw;
  const std::int64_t BP = static_cast<std::int64_t>(B) * P;

  Array<S> y({B, Cout, Hp, Wp});
  {
    std::vector<S> col(static_cast<std::size_t>(K * BP));
    std::vector<S> prod(static_cast<std::size_t>(Coutg) * BP);
    for (int g = 0; g < groups; ++g) {
      detail::im2col_group(xv.data(), B, Cin, H, W, g * Cg, Cg, kh, kw, stride, padding, Hp, Wp, col.data());
      CMapRM<S> Wg(wv.data() + static_cast<std::int64_t>(g) * Coutg * K, Coutg, K);
      CMapRM<S> C(col.data(), K, BP);
      MapRM<S> Pr(prod.data(), Coutg, BP);
      Pr.noalias() = Wg * C;
      for (int oc = 0; oc < Coutg; ++oc) {
        const S bval = bv.v[g * Coutg + oc];
        for (int b = 0; b < B; ++b) {
          const S* src = prod.data() + oc * BP + b * P;
          S* dst = y.data() + ((static_cast<std::int64_t>(b) * Cout + g * Coutg + oc) * P);
          for (std::int64_t p = 0; p < P; ++p) dst[p] = src[p] + bval;
        }
      }
    }
  }

  bool rg = t.requires_grad(input) || t.requires_grad(weight) || t.requires_grad(bias);
  ArrayPtr<S> xp = t.value_ptr(input);
  ArrayPtr<S> wp = t.value_ptr(weight);
  auto back = [input, weight, bias, xp, wp, B, Cin, H, W, Cout, Cg, kh, kw, stride, padding, groups, Hp,
               Wp](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    const int Coutg = Cout / groups;
    const std::int64_t P = static_cast<std::int64_t>(Hp) * Wp;
    const std::int64_t K = static_cast<std::int64_t>(Cg) * kh * kw;
    const std::int64_t BP = static_cast<std::int64_t>(B) * P;

    if (tp.requires_grad(bias)) {
      std::vector<S>& gb = tp.grad(bias);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cout; ++c) {
          const S* src = go.data() + (static_cast<std::int64_t>(b) * Cout + c) * P;
          S acc = S(0);
          for (std::int64_t p = 0; p < P; ++p) acc += src[p];
          gb[c] += acc;
        }
    }

    const bool need_gx = tp.requires_grad(input);
    const bool need_gw = tp.requires_grad(weight);
    if (!need_gx && !need_gw) return;

    std::vector<S> col(static_cast<std::size_t>(K * BP));
    std::vector<S> gyg(static_cast<std::size_t>(Coutg) * BP);
    std::vector<S> gcol;
    if (need_gx) gcol.resize(static_cast<std::size_t>(K * BP));

    for (int g = 0; g < groups; ++g) {
      // gather this group's output gradient into [Coutg x B*P]
      for (int oc = 0; oc < Coutg; ++oc)
        for (int b = 0; b < B; ++b) {
          const S* src = go.data() + ((static_cast<std::int64_t>(b) * Cout + g * Coutg + oc) * P);
          std::copy_n(src, P, gyg.data() + oc * BP + b * P);
        }
      CMapRM<S> GY(gyg.data(), Coutg, BP);
      if (need_gw) {
        detail::im2col_group(xp->data(), B, Cin, H, W, g * Cg, Cg, kh, kw, stride, padding, Hp, Wp, col.data());
        CMapRM<S> C(col.data(), K, BP);
        MapRM<S> GW(tp.grad(weight).data() + static_cast<std::int64_t>(g) * Coutg * K, Coutg, K);
        GW.noalias() += GY * C.transpose();
      }
      if (need_gx) {
        CMapRM<S> Wg(wp->data() + static_cast<std::int64_t>(g) * Coutg * K, Coutg, K);
        MapRM<S> GC(gcol.data(), K, BP);
        GC.noalias() = Wg.transpose() * GY;
        detail::col2im_group(gcol.data(), B, Cin, H, W, g * Cg, Cg, kh, kw, stride, padding, Hp, Wp,
                             tp.grad(input).data());
      }
    }
  };
  return t.emit(std::move(y), rg, std::move(back));
}

// Per-channel batch normalization over B x C x H x W. Train mode uses batch
// statistics and updates the running stats in place (EMA, unbiased variance);
// eval mode uses the running stats.
template <typename S>
Var<S> batchnorm2d(Var<S> input, Var<S> gamma, Var<S> beta, Array<S>& running_mean, Array<S>& running_var,
                   S momentum, S eps, bool train) {
  Tape<S>& t = detail::same_tape(input, gamma);
  detail::same_tape(input, beta);
  const Array<S>& xv = t.value(input);
  check(xv.rank() == 4, "batchnorm2d: input must be BxCxHxW");
  const int B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  check(t.value(gamma).numel() == C && t.value(beta).numel() == C, "batchnorm2d: gamma/beta channel mismatch");
  check(running_mean.numel() == C && running_var.numel() == C, "batchnorm2d: running stat channel mismatch");
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  const std::int64_t m = static_cast<std::int64_t>(B) * plane;

  auto mean = std::make_shared<std::vector<S>>(C, S(0));
  auto invstd = std::make_shared<std::vector<S>>(C, S(0));

  if (train) {
    check(m >= 2, "batchnorm2d: train mode requires B*H*W >= 2");
    for (int c = 0; c < C; ++c) {
      S acc = S(0);
      for (int b = 0; b < B; ++b) {
        const S* src = xv.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
        for (std::int64_t p = 0; p < plane; ++p) acc += src[p];
      }
      const S mu = acc / static_cast<S>(m);
      S var = S(0);
      for (int b = 0; b < B; ++b) {
        const S* src = xv.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
          const S d = src[p] - mu;
          var += d * d;
        }
      }
      var /= static_cast<S>(m);
      (*mean)[c] = mu;
      (*invstd)[c] = S(1) / std::sqrt(var + eps);
      running_mean.v[c] = (S(1) - momentum) * running_mean.v[c] + momentum * mu;
      running_var.v[c] =
          (S(1) - momentum) * running_var.v[c] + momentum * var * static_cast<S>(m) / static_cast<S>(m - 1);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = running_mean.v[c];
      (*invstd)[c] = S(1) / std::sqrt(running_var.v[c] + eps);
    }
  }

  const Array<S>& gv = t.value(gamma);
  const Array<S>& bv = t.value(beta);
  Array<S> y(xv.shape);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* src = xv.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
      S* dst = y.data() + (static_cast<std::int64_t>(b) * C + c) * plane;
      const S mu = (*mean)[c], is = (*invstd)[c], ga = gv.v[c], be = bv.v[c];
      for (std::int64_t p = 0; p < plane; ++p) dst[p] = (src[p] - mu) * is * ga + be;
    }

  bool rg = t.requires_grad(input) || t.requires_grad(gamma) || t.requires_grad(beta);
  ArrayPtr<S> xp = t.value_ptr(input);
  ArrayPtr<S> gp = t.value_ptr(gamma);
  auto back = [input, gamma, beta, xp, gp, mean, invstd, B, C, plane, m, train](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    const bool need_gx = tp.requires_grad(input);
    const bool need_gg = tp.requires_grad(gamma);
    const bool need_gb = tp.requires_grad(beta);
    for (int c = 0; c < C; ++c) {
      const S mu = (*mean)[c], is = (*invstd)[c], ga = gp->v[c];
      S sum_dy = S(0), sum_dy_xhat = S(0);
      for (int b = 0; b < B; ++b) {
        const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
        const S* dy = go.data() + off;
        const S* x = xp->data() + off;
        for (std::int64_t p = 0; p < plane; ++p) {
          sum_dy += dy[p];
          sum_dy_xhat += dy[p] * (x[p] - mu) * is;
        }
      }
      if (need_gb) tp.grad(beta)[c] += sum_dy;
      if (need_gg) tp.grad(gamma)[c] += sum_dy_xhat;
      if (!need_gx) continue;
      std::vector<S>& gx = tp.grad(input);
      if (train) {
        const S k1 = sum_dy / static_cast<S>(m);
        const S k2 = sum_dy_xhat / static_cast<S>(m);
        for (int b = 0; b < B; ++b) {
          const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
          const S* dy = go.data() + off;
          const S* x = xp->data() + off;
          S* g = gx.data() + off;
          for (std::int64_t p = 0; p < plane; ++p) {
            const S xhat = (x[p] - mu) * is;
            g[p] += ga * is * (dy[p] - k1 - xhat * k2);
          }
        }
      } else {
        // running stats are constants in eval mode
        for (int b = 0; b < B; ++b) {
          const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * plane;
          const S* dy = go.data() + off;
          S* g = gx.data() + off;
          for (std::int64_t p = 0; p < plane; ++p) g[p] += dy[p] * ga * is;
        }
      }
    }
  };
  return t.emit(std::move(y), rg, std::move(back));
}

}  // namespace axe

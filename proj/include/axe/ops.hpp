#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "axe/rng.hpp"
#include "axe/tensor.hpp"

namespace axe {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

namespace detail {

template <typename S>
Tape<S>& same_tape(const Var<S>& a, const Var<S>& b) {
  check(a.tape && a.tape == b.tape, "operands must come from the same tape");
  return *a.tape;
}

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> relu(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[i] = xv.v[i] > S(0) ? xv.v[i] : S(0);
  if (t.record_kinks)
    for (std::int64_t i = 0; i < xv.numel(); ++i) t.note_kink(xv.v[i] > S(0) ? 1u : 0u);
  ArrayPtr<S> xp = t.value_ptr(x);
  return t.emit(std::move(y), t.requires_grad(x), [x, xp](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    // subgradient at exactly 0 is 0
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xp->v[i] > S(0)) gx[i] += go[i];
  });
}

template <typename S>
Var<S> tanh(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[i] = std::tanh(xv.v[i]);
  return t.emit(std::move(y), t.requires_grad(x), [x](Tape<S>& tp, const Var<S>& o) {
    const std::vector<S>& yv = tp.value(o).v;
    const std::vector<S>& go = tp.grad(o);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (S(1) - yv[i] * yv[i]);
  });
}

template <typename S>
Var<S> exp(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[i] = std::exp(xv.v[i]);
  return t.emit(std::move(y), t.requires_grad(x), [x](Tape<S>& tp, const Var<S>& o) {
    const std::vector<S>& yv = tp.value(o).v;
    const std::vector<S>& go = tp.grad(o);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * yv[i];
  });
}

template <typename S>
Var<S> log(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    check(xv.v[i] > S(0), "log: nonpositive input");
    y.v[i] = std::log(xv.v[i]);
  }
  ArrayPtr<S> xp = t.value_ptr(x);
  return t.emit(std::move(y), t.requires_grad(x), [x, xp](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] / xp->v[i];
  });
}

template <typename S>
Var<S> neg(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[i] = -xv.v[i];
  return t.emit(std::move(y), t.requires_grad(x), [x](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= go[i];
  });
}

template <typename S>
Var<S> scale(Var<S> x, S c) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[i] = c * xv.v[i];
  return t.emit(std::move(y), t.requires_grad(x), [x, c](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
  });
}

// Subgradient at the boundaries is 0, same convention as relu.
template <typename S>
Var<S> clamp(Var<S> x, S lo, S hi) {
  check(lo < hi, "clamp: lo must be < hi");
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[i] = std::min(std::max(xv.v[i], lo), hi);
  if (t.record_kinks)
    for (std::int64_t i = 0; i < xv.numel(); ++i)
      t.note_kink(xv.v[i] <= lo ? 0u : (xv.v[i] >= hi ? 2u : 1u));
  ArrayPtr<S> xp = t.value_ptr(x);
  return t.emit(std::move(y), t.requires_grad(x), [x, xp, lo, hi](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xp->v[i] > lo && xp->v[i] < hi) gx[i] += go[i];
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::check_same_shape(a, b, "add");
  const Array<S>& av = t.value(a);
  const Array<S>& bv = t.value(b);
  Array<S> y(av.shape);
  for (std::int64_t i = 0; i < av.numel(); ++i) y.v[i] = av.v[i] + bv.v[i];
  bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.emit(std::move(y), rg, [a, b](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    if (tp.requires_grad(a)) {
      std::vector<S>& ga = tp.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    }
    if (tp.requires_grad(b)) {
      std::vector<S>& gb = tp.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
    }
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::check_same_shape(a, b, "mul");
  const Array<S>& av = t.value(a);
  const Array<S>& bv = t.value(b);
  Array<S> y(av.shape);
  for (std::int64_t i = 0; i < av.numel(); ++i) y.v[i] = av.v[i] * bv.v[i];
  bool rg = t.requires_grad(a) || t.requires_grad(b);
  ArrayPtr<S> ap = t.value_ptr(a);
  ArrayPtr<S> bp = t.value_ptr(b);
  return t.emit(std::move(y), rg, [a, b, ap, bp](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    if (tp.requires_grad(a)) {
      std::vector<S>& ga = tp.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bp->v[i];
    }
    if (tp.requires_grad(b)) {
      std::vector<S>& gb = tp.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * ap->v[i];
    }
  });
}

// Compositions of the primitive set.
template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  return add(a, neg(b));
}

// min(a,b) = a - relu(a-b); ties route the gradient to a.
template <typename S>
Var<S> vmin(Var<S> a, Var<S> b) {
  return sub(a, relu(sub(a, b)));
}

// ---------------------------------------------------------------------------
// Reductions. Empty axis set means reduce over all axes; result of a full
// reduction has shape [1].
// ---------------------------------------------------------------------------

enum class Reduce { sum, mean };

template <typename S>
Var<S> reduce(Var<S> x, Reduce kind, std::vector<int> axes = {}) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  const int rank = xv.rank();
  if (axes.empty())
    for (int i = 0; i < rank; ++i) axes.push_back(i);
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int a : axes) check(a >= 0 && a < rank, "reduce: invalid axis " + std::to_string(a));

  std::vector<bool> reduced(rank, false);
  for (int a : axes) reduced[a] = true;
  Shape out_shape;
  for (int i = 0; i < rank; ++i)
    if (!reduced[i]) out_shape.push_back(xv.shape[i]);
  if (out_shape.empty()) out_shape = {1};

  // map from input flat index to output flat index via per-dim strides
  std::vector<std::int64_t> out_stride(rank, 0);
  {
    std::int64_t s = 1;
    for (int i = rank - 1; i >= 0; --i) {
      if (!reduced[i]) {
        out_stride[i] = s;
        s *= xv.shape[i];
      }
    }
  }
  std::vector<std::int64_t> in_stride(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * xv.shape[i + 1];

  std::int64_t count = 1;
  for (int a : axes) count *= xv.shape[a];
  const S inv = kind == Reduce::mean ? S(1) / static_cast<S>(count) : S(1);

  auto out_index = [rank, in_stride, out_stride, dims = xv.shape](std::int64_t flat) {
    std::int64_t o = 0;
    for (int i = 0; i < rank; ++i) {
      std::int64_t coord = (flat / in_stride[i]) % dims[i];
      o += coord * out_stride[i];
    }
    return o;
  };

  Array<S> y(out_shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) y.v[out_index(i)] += xv.v[i];
  if (kind == Reduce::mean)
    for (auto& e : y.v) e *= inv;

  return t.emit(std::move(y), t.requires_grad(x), [x, out_index, inv](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(gx.size()); ++i) gx[i] += inv * go[out_index(i)];
  });
}

// ---------------------------------------------------------------------------
// Shape operations
// ---------------------------------------------------------------------------

template <typename S>
Var<S> reshape(Var<S> x, Shape new_shape) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  check(numel(new_shape) == xv.numel(), "reshape: element count mismatch " + shape_str(xv.shape) + " -> " +
                                            shape_str(new_shape));
  Array<S> y(new_shape, xv.v);
  return t.emit(std::move(y), t.requires_grad(x), [x](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

template <typename S>
Var<S> flatten(Var<S> x) {
  const Shape& s = x.shape();
  check(!s.empty(), "flatten: rank 0");
  int rest = 1;
  for (std::size_t i = 1; i < s.size(); ++i) rest *= s[i];
  return reshape(x, {s[0], rest});
}

namespace detail {

// view [outer, extent(axis), inner]
inline void axis_view(const Shape& s, int axis, std::int64_t& outer, std::int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

template <typename S>
Var<S> concat(const std::vector<Var<S>>& xs, int axis) {
  check(!xs.empty(), "concat: no inputs");
  Tape<S>& t = *xs[0].tape;
  const int rank = xs[0].val().rank();
  check(axis >= 0 && axis < rank, "concat: invalid axis");
  Shape out_shape = xs[0].shape();
  bool rg = false;
  for (const auto& x : xs) {
    check(x.tape == &t, "concat: operands from different tapes");
    check(x.val().rank() == rank, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis)
        check(x.shape()[i] == out_shape[i], "concat: extent mismatch on axis " + std::to_string(i));
    rg = rg || t.requires_grad(x);
  }
  int total = 0;
  for (const auto& x : xs) total += x.shape()[axis];
  out_shape[axis] = total;

  std::int64_t outer, inner;
  detail::axis_view(out_shape, axis, outer, inner);
  Array<S> y(out_shape);
  std::vector<int> extents;
  for (const auto& x : xs) extents.push_back(x.shape()[axis]);

  std::int64_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Array<S>& xv = t.value(xs[k]);
    const std::int64_t seg = extents[k] * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(xv.v.data() + o * seg, seg, y.v.data() + o * total * inner + off);
    off += seg;
  }

  std::vector<Var<S>> inputs = xs;
  return t.emit(std::move(y), rg, [inputs, extents, outer, inner, total](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::int64_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const std::int64_t seg = extents[k] * inner;
      if (tp.requires_grad(inputs[k])) {
        std::vector<S>& gx = tp.grad(inputs[k]);
        for (std::int64_t o = 0; o < outer; ++o) {
          const S* src = go.data() + o * total * inner + off;
          S* dst = gx.data() + o * seg;
          for (std::int64_t i = 0; i < seg; ++i) dst[i] += src[i];
        }
      }
      off += seg;
    }
  });
}

template <typename S>
Var<S> slice(Var<S> x, int axis, int start, int len) {
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  const int rank = xv.rank();
  check(axis >= 0 && axis < rank, "slice: invalid axis");
  check(start >= 0 && len > 0 && start + len <= xv.shape[axis], "slice: range out of bounds");
  Shape out_shape = xv.shape;
  out_shape[axis] = len;

  std::int64_t outer, inner;
  detail::axis_view(xv.shape, axis, outer, inner);
  const std::int64_t in_axis = xv.shape[axis];

  Array<S> y(out_shape);
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(xv.v.data() + (o * in_axis + start) * inner, len * inner, y.v.data() + o * len * inner);

  return t.emit(std::move(y), t.requires_grad(x),
                [x, outer, inner, in_axis, start, len](Tape<S>& tp, const Var<S>& out) {
                  const std::vector<S>& go = tp.grad(out);
                  std::vector<S>& gx = tp.grad(x);
                  for (std::int64_t o = 0; o < outer; ++o) {
                    const S* src = go.data() + o * len * inner;
                    S* dst = gx.data() + (o * in_axis + start) * inner;
                    for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                  }
                });
}

// ---------------------------------------------------------------------------
// Dropout (inverted: survivors scaled at train time, eval is identity)
// ---------------------------------------------------------------------------

template <typename S>
Var<S> dropout(Var<S> x, double p, bool train, Rng& rng) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  Tape<S>& t = *x.tape;
  const Array<S>& xv = t.value(x);
  const S keep_scale = S(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<S>>(xv.v.size());
  Array<S> y(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    const S m = rng.uniform() >= p ? keep_scale : S(0);
    (*mask)[i] = m;
    y.v[i] = xv.v[i] * m;
  }
  return t.emit(std::move(y), t.requires_grad(x), [x, mask](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    std::vector<S>& gx = tp.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------
// Linear: out = input . weight^T + bias
// ---------------------------------------------------------------------------

template <typename S>
Var<S> linear(Var<S> input, Var<S> weight, Var<S> bias) {
  Tape<S>& t = detail::same_tape(input, weight);
  detail::same_tape(input, bias);
  const Array<S>& xv = t.value(input);
  const Array<S>& wv = t.value(weight);
  const Array<S>& bv = t.value(bias);
  check(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1, "linear: expects [Bxn], [mxn], [m]");
  const int B = xv.shape[0], n = xv.shape[1], m = wv.shape[0];
  check(wv.shape[1] == n, "linear: inner dimension mismatch " + shape_str(xv.shape) + " vs " + shape_str(wv.shape));
  check(bv.shape[0] == m, "linear: bias extent mismatch");

  Array<S> y({B, m});
  {
    CMapRM<S> X(xv.data(), B, n), W(wv.data(), m, n);
    MapRM<S> Y(y.data(), B, m);
    Y.noalias() = X * W.transpose();
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < m; ++j) y.v[static_cast<std::size_t>(i) * m + j] += bv.v[j];
  }

  bool rg = t.requires_grad(input) || t.requires_grad(weight) || t.requires_grad(bias);
  ArrayPtr<S> xp = t.value_ptr(input);
  ArrayPtr<S> wp = t.value_ptr(weight);
  return t.emit(std::move(y), rg, [input, weight, bias, xp, wp, B, n, m](Tape<S>& tp, const Var<S>& out) {
    const std::vector<S>& go = tp.grad(out);
    CMapRM<S> GO(go.data(), B, m);
    if (tp.requires_grad(input)) {
      MapRM<S> GX(tp.grad(input).data(), B, n);
      CMapRM<S> W(wp->data(), m, n);
      GX.noalias() += GO * W;
    }
    if (tp.requires_grad(weight)) {
      MapRM<S> GW(tp.grad(weight).data(), m, n);
      CMapRM<S> X(xp->data(), B, n);
      GW.noalias() += GO.transpose() * X;
    }
    if (tp.requires_grad(bias)) {
      std::vector<S>& gb = tp.grad(bias);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < m; ++j) gb[j] += go[static_cast<std::size_t>(i) * m + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label], max-subtracted for
// stability. Backward: (softmax - onehot) / B.
template <typename S>
Var<S> softmax_cross_entropy(Var<S> logits, const std::vector<int>& labels) {
  Tape<S>& t = *logits.tape;
  const Array<S>& zv = t.value(logits);
  check(zv.rank() == 2, "softmax_cross_entropy: logits must be BxC");
  const int B = zv.shape[0], C = zv.shape[1];
  check(static_cast<int>(labels.size()) == B, "softmax_cross_entropy: label count mismatch");
  for (int y : labels) check(y >= 0 && y < C, "softmax_cross_entropy: label out of range");

  const bool rg = t.requires_grad(logits);
  auto probs = rg ? std::make_shared<std::vector<S>>(zv.v.size()) : nullptr;
  S loss = S(0);
  for (int b = 0; b < B; ++b) {
    const S* z = zv.data() + static_cast<std::size_t>(b) * C;
    S mx = z[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, z[c]);
    S sum = S(0);
    for (int c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
    const S lse = mx + std::log(sum);
    loss += lse - z[labels[b]];
    if (rg) {
      S* p = probs->data() + static_cast<std::size_t>(b) * C;
      for (int c = 0; c < C; ++c) p[c] = std::exp(z[c] - mx) / sum;
    }
  }
  loss /= static_cast<S>(B);

  auto lab = std::make_shared<std::vector<int>>(labels);
  return t.emit(Array<S>::scalar(loss), rg, [logits, probs, lab, B, C](Tape<S>& tp, const Var<S>& out) {
    const S g = tp.grad(out)[0];
    std::vector<S>& gz = tp.grad(logits);
    const S invB = S(1) / static_cast<S>(B);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const std::size_t i = static_cast<std::size_t>(b) * C + c;
        gz[i] += g * invB * ((*probs)[i] - ((*lab)[b] == c ? S(1) : S(0)));
      }
  });
}

// Mean over the batch of the squared L2 norm of (target - pred) per row.
template <typename S>
Var<S> mse(Var<S> pred, Var<S> target) {
  Tape<S>& t = detail::same_tape(pred, target);
  detail::check_same_shape(pred, target, "mse");
  const Array<S>& pv = t.value(pred);
  const Array<S>& tv = t.value(target);
  check(pv.rank() == 2, "mse: expects Bxd");
  const int B = pv.shape[0];
  S loss = S(0);
  for (std::int64_t i = 0; i < pv.numel(); ++i) {
    const S d = tv.v[i] - pv.v[i];
    loss += d * d;
  }
  loss /= static_cast<S>(B);
  bool rg = t.requires_grad(pred) || t.requires_grad(target);
  ArrayPtr<S> pp = t.value_ptr(pred);
  ArrayPtr<S> tp_ = t.value_ptr(target);
  return t.emit(Array<S>::scalar(loss), rg, [pred, target, pp, tp_, B](Tape<S>& tp, const Var<S>& out) {
    const S g = tp.grad(out)[0] * S(2) / static_cast<S>(B);
    if (tp.requires_grad(pred)) {
      std::vector<S>& gp = tp.grad(pred);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * (pp->v[i] - tp_->v[i]);
    }
    if (tp.requires_grad(target)) {
      std::vector<S>& gt = tp.grad(target);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g * (tp_->v[i] - pp->v[i]);
    }
  });
}

}  // namespace axe

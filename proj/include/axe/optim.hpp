#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "axe/tensor.hpp"

namespace axe {

// Named trainable tensor. The value buffer is shared with tape leaves so a
// forward pass does not copy parameters.
template <typename S>
struct Param {
  std::string name;
  std::shared_ptr<Array<S>> value;

  Param() = default;
  Param(std::string n, Array<S> a) : name(std::move(n)), value(std::make_shared<Array<S>>(std::move(a))) {}
  Array<S>& array() { return *value; }
  const Array<S>& array() const { return *value; }
};

template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m, v;  // parallel to the parameter list
  std::int64_t t = 0;
  S lr = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

// One Adam update with bias correction. A null grad entry is treated as an
// all-zero gradient for that parameter.
template <typename S>
void adam_step(const std::vector<Array<S>*>& params, const std::vector<const std::vector<S>*>& grads,
               AdamState<S>& st) {
  check(params.size() == grads.size(), "adam_step: params/grads length mismatch");
  if (st.m.empty()) {
    st.m.resize(params.size());
    st.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i]->v.size(), S(0));
      st.v[i].assign(params[i]->v.size(), S(0));
    }
  }
  check(st.m.size() == params.size(), "adam_step: state size mismatch");
  st.t += 1;
  const S bc1 = S(1) - std::pow(st.beta1, static_cast<S>(st.t));
  const S bc2 = S(1) - std::pow(st.beta2, static_cast<S>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Array<S>& p = *params[i];
    check(st.m[i].size() == p.v.size(), "adam_step: shape mismatch for param " + std::to_string(i));
    if (grads[i]) check(grads[i]->size() == p.v.size(), "adam_step: grad shape mismatch");
    std::vector<S>& m = st.m[i];
    std::vector<S>& v = st.v[i];
    for (std::size_t j = 0; j < p.v.size(); ++j) {
      const S g = grads[i] ? (*grads[i])[j] : S(0);
      m[j] = st.beta1 * m[j] + (S(1) - st.beta1) * g;
      v[j] = st.beta2 * v[j] + (S(1) - st.beta2) * g * g;
      const S mhat = m[j] / bc1;
      const S vhat = v[j] / bc2;
      p.v[j] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

// Owns the optimizer state for a fixed parameter list.
template <typename S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::vector<Param<S>*> params, S lr = S(1e-3)) : params_(std::move(params)) { st_.lr = lr; }

  const std::vector<Param<S>*>& params() const { return params_; }
  AdamState<S>& state() { return st_; }

  void step(const std::vector<const std::vector<S>*>& grads) {
    std::vector<Array<S>*> arrs;
    arrs.reserve(params_.size());
    for (auto* p : params_) arrs.push_back(p->value.get());
    adam_step(arrs, grads, st_);
  }

 private:
  std::vector<Param<S>*> params_;
  AdamState<S> st_;
};

}  // namespace axe

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "axe/tensor.hpp"

namespace axe {

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
  // partials whose finite-difference interval crossed a relu/clamp kink
  std::int64_t skipped = 0;
};

// Builds a scalar-rooted graph over the given input leaves. Must be a pure
// function of the leaf values (fix any rng seeds inside).
using Builder64 = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Central finite differences vs. analytic reverse-mode gradients, elementwise,
// with relative error denominator max(|analytic|, |numeric|, 1e-8). Partials
// whose two probe evaluations disagree on any kink region are skipped; callers
// should sample inputs away from kinks to keep the skip count low.
inline GradcheckReport gradcheck(const Builder64& build, std::vector<Array<double>> inputs,
                                 double eps = 1e-4) {
  std::vector<Array<double>> analytic;
  {
    Tape<double> tape;
    tape.record_kinks = true;
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in, true));
    Var<double> root = build(tape, leaves);
    tape.backward(root);
    for (const auto& leaf : leaves) {
      Array<double> g(leaf.shape());
      if (tape.has_grad(leaf)) g.v = tape.grad(leaf);
      analytic.push_back(std::move(g));
    }
  }

  auto eval = [&](double& value, std::uint64_t& signature) {
    Tape<double> tape;
    tape.record_kinks = true;
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in, false));
    Var<double> root = build(tape, leaves);
    check(tape.value(root).numel() == 1, "gradcheck: builder root must be scalar");
    value = tape.value(root).v[0];
    signature = tape.kink_signature;
  };

  GradcheckReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].v.size(); ++j) {
      const double orig = inputs[i].v[j];
      double f_plus, f_minus;
      std::uint64_t sig_plus, sig_minus;
      inputs[i].v[j] = orig + eps;
      eval(f_plus, sig_plus);
      inputs[i].v[j] = orig - eps;
      eval(f_minus, sig_minus);
      inputs[i].v[j] = orig;
      if (sig_plus != sig_minus) {
        ++rep.skipped;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[i].v[j];
      const double denom = std::max(std::max(std::fabs(a), std::fabs(numeric)), 1e-8);
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) rep.max_rel_err = rel;
      ++rep.checked;
    }
  }
  return rep;
}

// Moves every element at least `margin` away from `kink`, preserving side.
inline void nudge_away_from(Array<double>& a, double kink, double margin) {
  for (auto& x : a.v) {
    const double d = x - kink;
    if (std::fabs(d) < margin) x = kink + (d >= 0 ? margin : -margin);
  }
}

}  // namespace axe

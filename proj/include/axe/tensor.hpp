#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace axe {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

// Dense row-major n-d array of scalars.
template <typename S>
struct Array {
  Shape shape;
  std::vector<S> v;

  Array() = default;
  explicit Array(Shape shp) : shape(std::move(shp)), v(static_cast<std::size_t>(axe::numel(shape)), S(0)) {
    for (int d : shape) check(d > 0, "Array: nonpositive extent in " + shape_str(shape));
  }
  Array(Shape shp, std::vector<S> values) : shape(std::move(shp)), v(std::move(values)) {
    check(axe::numel(shape) == static_cast<std::int64_t>(v.size()),
          "Array: shape " + shape_str(shape) + " does not match value count " + std::to_string(v.size()));
  }

  static Array zeros(Shape shp) { return Array(std::move(shp)); }
  static Array full(Shape shp, S val) {
    Array a(std::move(shp));
    std::fill(a.v.begin(), a.v.end(), val);
    return a;
  }
  static Array scalar(S val) { return Array({1}, {val}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }

  template <typename T>
  Array<T> cast() const {
    Array<T> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
    return out;
  }
};

template <typename S>
using ArrayPtr = std::shared_ptr<const Array<S>>;

template <typename S>
class Tape;

// Handle to a node on a tape.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Array<S>& val() const;
  const Shape& shape() const { return val().shape; }
};

// Records forward operations so gradients can be propagated in reverse.
// Single-owner: one worker builds, evaluates, and differentiates a graph;
// distinct workers use distinct tapes.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Var<S>&)>;

  // Finite-difference support: when set, ops with kinks (relu, clamp) fold
  // the region of every element into a signature so a checker can tell
  // whether two nearby evaluations crossed a nondifferentiable point.
  bool record_kinks = false;
  std::uint64_t kink_signature = 0xcbf29ce484222325ULL;
  void note_kink(unsigned region) {
    kink_signature = (kink_signature ^ (region + 0x9eULL)) * 0x100000001b3ULL;
  }

  Var<S> leaf(Array<S> value, bool requires_grad = false) {
    return leaf(std::make_shared<Array<S>>(std::move(value)), requires_grad);
  }

  Var<S> leaf(ArrayPtr<S> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Used by op implementations. The backward closure receives the output
  // var, reads its gradient, and accumulates into operand gradients. It is
  // dropped entirely when no operand requires gradients.
  Var<S> emit(Array<S> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::make_shared<Array<S>>(std::move(value)), {}, requires_grad,
                          requires_grad ? std::move(backward) : nullptr});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Array<S>& value(const Var<S>& x) const { return *nodes_[check_id(x)].value; }
  ArrayPtr<S> value_ptr(const Var<S>& x) const { return nodes_[check_id(x)].value; }
  bool requires_grad(const Var<S>& x) const { return nodes_[check_id(x)].requires_grad; }
  bool has_grad(const Var<S>& x) const { return !nodes_[check_id(x)].grad.empty(); }

  // Gradient buffer, zero-initialized on first access.
  std::vector<S>& grad(const Var<S>& x) {
    Node& n = nodes_[check_id(x)];
    if (n.grad.empty()) n.grad.assign(n.value->v.size(), S(0));
    return n.grad;
  }

  // Reverse sweep from a scalar root. Gradients accumulate (sum) when a
  // node feeds multiple consumers.
  void backward(const Var<S>& root) {
    check(root.tape == this, "backward: root from another tape");
    check(value(root).numel() == 1, "backward: root must be scalar, got " + shape_str(value(root).shape));
    check(nodes_[root.id].requires_grad, "backward: root does not require grad");
    grad(root).assign(1, S(1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && !n.grad.empty()) n.back(*this, Var<S>{this, i});
    }
  }

  void reset() {
    nodes_.clear();
    kink_signature = 0xcbf29ce484222325ULL;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    ArrayPtr<S> value;
    std::vector<S> grad;
    bool requires_grad;
    BackwardFn back;
  };

  int check_id(const Var<S>& x) const {
    check(x.tape == this && x.id >= 0 && x.id < static_cast<int>(nodes_.size()), "Var from another tape");
    return x.id;
  }

  std::vector<Node> nodes_;
};

template <typename S>
const Array<S>& Var<S>::val() const {
  return tape->value(*this);
}

}  // namespace axe

#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations build new nodes
// that remember their inputs and a local vector-Jacobian rule; backward()
// traces the resulting DAG in topological order and accumulates gradients
// into every leaf created with requires_grad. Element type is a template
// parameter: float for training, double for finite-difference checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "inamp/errors.hpp"

// Per-op finiteness scan: on by default in debug builds, off with NDEBUG.
#if !defined(INAMP_FINITE_CHECKS)
#if defined(NDEBUG)
#define INAMP_FINITE_CHECKS 0
#else
#define INAMP_FINITE_CHECKS 1
#endif
#endif

namespace inamp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  bool requires_grad = false;  // meaningful on leaves
  bool needs_grad = false;     // this node or some ancestor leaf wants gradients
  std::vector<T> grad;         // empty until backward touches this node
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads. Receives
  // the node itself so no self-reference is captured.
  std::function<void(TensorNode&)> backprop;

  bool is_leaf() const { return inputs.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* what) {
#if INAMP_FINITE_CHECKS
  for (T x : v) {
    if (!std::isfinite(x)) throw NonFiniteValue(std::string(what) + ": produced a non-finite value");
  }
#else
  (void)v;
  (void)what;
#endif
}

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }

  static Tensor filled(Shape shape, T value) {
    validate_shape(shape);
    auto n = std::make_shared<Node>();
    n->values.assign(shape_size(shape), value);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
  }

  static Tensor from_values(Shape shape, std::vector<T> values) {
    validate_shape(shape);
    if (values.size() != shape_size(shape))
      throw ShapeMismatch("from_values: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    detail::check_finite(n->values, "from_values");
    return Tensor(std::move(n));
  }

  static Tensor scalar(T value) { return from_values({}, {value}); }

  bool empty() const { return !node_; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->values.size(); }

  std::span<const T> values() const { return node_->values; }
  std::span<T> values_mut() { return node_->values; }

  T item() const {
    if (size() != 1) throw NotScalar("item: tensor has " + std::to_string(size()) + " elements");
    return node_->values[0];
  }

  T at(const std::vector<std::size_t>& idx) const {
    return node_->values[flat_index(idx)];
  }

  std::size_t flat_index(const std::vector<std::size_t>& idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw InvalidAxis("index rank mismatch");
    std::size_t flat = 0;
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (idx[d] >= s[d]) throw IndexOutOfRange("index out of range in dim " + std::to_string(d));
      flat = flat * s[d] + idx[d];
    }
    return flat;
  }

  bool requires_grad() const { return node_->requires_grad; }

  Tensor& set_requires_grad(bool v) {
    if (!node_->is_leaf()) throw Error("set_requires_grad: only leaves can be marked");
    node_->requires_grad = v;
    node_->needs_grad = v;
    return *this;
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }

  std::span<const T> grad() const {
    if (!has_grad()) throw Error("grad: no gradient present (run backward first)");
    return node_->grad;
  }

  void zero_grad() {
    node_->grad.assign(node_->values.size(), T(0));
  }

  /// Deep copy of the values as a fresh leaf (no graph history, no grad).
  Tensor detached_copy() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->values = node_->values;
    return Tensor(std::move(n));
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static void validate_shape(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d < 1) throw InvalidShape("shape " + shape_str(shape) + " has a dimension < 1");
    }
  }

  std::shared_ptr<Node> node_;

  template <typename U>
  friend Tensor<U> make_op(Shape, std::vector<U>, std::vector<std::shared_ptr<detail::TensorNode<U>>>,
                           std::function<void(detail::TensorNode<U>&)>, const char*);
};

/// Builds an operation result node. If no input carries gradient demand the
/// result is detached (no inputs, no backprop) so inference does not grow
/// graph chains.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> values,
                  std::vector<std::shared_ptr<detail::TensorNode<T>>> inputs,
                  std::function<void(detail::TensorNode<T>&)> backprop, const char* what) {
  detail::check_finite(values, what);
  auto n = std::make_shared<detail::TensorNode<T>>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->needs_grad;
  if (needs) {
    n->needs_grad = true;
    n->inputs = std::move(inputs);
    n->backprop = std::move(backprop);
  }
  return Tensor<T>(std::move(n));
}

// ---------------------------------------------------------------------------
// Topologically ordered view of the graph reachable from a root tensor.

template <typename T>
struct Graph {
  std::vector<std::shared_ptr<detail::TensorNode<T>>> nodes;  // inputs precede consumers

  static Graph trace(const Tensor<T>& root) {
    Graph g;
    if (root.empty()) return g;
    std::unordered_set<const detail::TensorNode<T>*> visited;
    std::vector<std::pair<std::shared_ptr<detail::TensorNode<T>>, std::size_t>> stack;
    visited.insert(root.node().get());
    stack.emplace_back(root.node(), 0);
    while (!stack.empty()) {
      auto node = stack.back().first;
      std::size_t pos = stack.back().second;
      if (pos < node->inputs.size()) {
        ++stack.back().second;
        auto child = node->inputs[pos];
        if (visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
      } else {
        g.nodes.push_back(std::move(node));
        stack.pop_back();
      }
    }
    return g;
  }
};

// ---------------------------------------------------------------------------
// Elementwise ops. The right operand may broadcast: it must have the same
// rank with size-1 dimensions wherever it does not match the left shape.

enum class EwiseKind { Add, Sub, Mul };

namespace detail {

// Calls f(ia, ib) for every element of `shape` (row-major), where ib walks a
// same-rank tensor whose size-1 dims have stride zero.
template <typename F>
void for_each_broadcast(const Shape& shape, const Shape& bshape, F&& f) {
  const std::size_t rank = shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::vector<std::size_t> bstride(rank, 0);
  std::size_t s = 1;
  for (std::size_t d = rank; d-- > 0;) {
    bstride[d] = (bshape[d] == 1) ? 0 : s;
    s *= bshape[d];
  }
  const std::size_t total = shape_size(shape);
  std::size_t ib = 0;
  for (std::size_t ia = 0; ia < total; ++ia) {
    f(ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ib += bstride[d];
      if (idx[d] < shape[d]) break;
      idx[d] = 0;
      ib -= bstride[d] * shape[d];
    }
  }
}

inline void check_broadcastable(const Shape& a, const Shape& b) {
  if (a == b) return;
  if (a.size() != b.size())
    throw BroadcastError("broadcast: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (b[d] != a[d] && b[d] != 1)
      throw BroadcastError("broadcast: " + shape_str(b) + " does not broadcast onto " + shape_str(a));
  }
}

}  // namespace detail

template <typename T>
Tensor<T> ewise(EwiseKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_broadcastable(a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(a.size());
  const bool same = a.shape() == b.shape();
  auto apply = [kind](T x, T y) {
    switch (kind) {
      case EwiseKind::Add: return x + y;
      case EwiseKind::Sub: return x - y;
      default: return x * y;
    }
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(av[i], bv[i]);
  } else {
    detail::for_each_broadcast(a.shape(), b.shape(), [&](std::size_t ia, std::size_t ib) {
      out[ia] = apply(av[ia], bv[ib]);
    });
  }

  auto backprop = [kind](detail::TensorNode<T>& self) {
    auto& ga = *self.inputs[0];
    auto& gb = *self.inputs[1];
    const auto& g = self.grad;
    const bool bsame = ga.shape == gb.shape;
    if (ga.needs_grad) {
      ga.ensure_grad();
      if (kind == EwiseKind::Mul) {
        if (bsame) {
          for (std::size_t i = 0; i < g.size(); ++i) ga.grad[i] += g[i] * gb.values[i];
        } else {
          detail::for_each_broadcast(ga.shape, gb.shape, [&](std::size_t ia, std::size_t ib) {
            ga.grad[ia] += g[ia] * gb.values[ib];
          });
        }
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga.grad[i] += g[i];
      }
    }
    if (gb.needs_grad) {
      gb.ensure_grad();
      const T sign = (kind == EwiseKind::Sub) ? T(-1) : T(1);
      if (kind == EwiseKind::Mul) {
        detail::for_each_broadcast(ga.shape, gb.shape, [&](std::size_t ia, std::size_t ib) {
          gb.grad[ib] += g[ia] * ga.values[ia];
        });
      } else {
        detail::for_each_broadcast(ga.shape, gb.shape, [&](std::size_t ia, std::size_t ib) {
          gb.grad[ib] += sign * g[ia];
        });
      }
    }
  };
  return make_op<T>(a.shape(), std::move(out), {a.node(), b.node()}, std::move(backprop), "ewise");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return ewise(EwiseKind::Add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return ewise(EwiseKind::Sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return ewise(EwiseKind::Mul, a, b); }

// ---------------------------------------------------------------------------
// Matrix product.

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] += A^T * B with A[m,k], B[m,n]
template <typename T>
void gemm_at_b_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A * B^T with A[m,n], B[k,n]
template <typename T>
void gemm_a_bt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      crow[p] += s;
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeMismatch("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeMismatch("matmul: inner dims disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  detail::gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);

  auto backprop = [m, k, n](detail::TensorNode<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.needs_grad) {
      na.ensure_grad();
      detail::gemm_a_bt_acc(self.grad.data(), nb.values.data(), na.grad.data(), m, k, n);
    }
    if (nb.needs_grad) {
      nb.ensure_grad();
      detail::gemm_at_b_acc(na.values.data(), self.grad.data(), nb.grad.data(), m, k, n);
    }
  };
  return make_op<T>({m, n}, std::move(out), {a.node(), b.node()}, std::move(backprop), "matmul");
}

// ---------------------------------------------------------------------------
// Reductions.

enum class ReduceKind { Sum, Mean, Max };

namespace detail {

// Walks a tensor row-major and yields (flat input index, flat output slot)
// for a reduction over the marked axes. Owns its configuration so backprop
// lambdas can keep a copy.
struct SlotWalker {
  Shape xs;
  std::vector<std::uint8_t> reduced;

  template <typename F>
  void operator()(F&& f) const {
    const std::size_t rank = xs.size();
    std::vector<std::size_t> idx(rank, 0);
    std::vector<std::size_t> ostride(rank, 0);
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
      if (!reduced[d]) {
        ostride[d] = s;
        s *= xs[d];
      }
    }
    const std::size_t total = shape_size(xs);
    std::size_t o = 0;
    for (std::size_t i = 0; i < total; ++i) {
      f(i, o);
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        o += ostride[d];
        if (idx[d] < xs[d]) break;
        idx[d] = 0;
        o -= ostride[d] * xs[d];
      }
    }
  }
};

}  // namespace detail

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, const std::vector<std::size_t>& axes, ReduceKind kind,
                 bool keepdims = false) {
  const Shape& xs = x.shape();
  std::vector<std::uint8_t> reduced(xs.size(), 0);
  for (std::size_t ax : axes) {
    if (ax >= xs.size()) throw InvalidAxis("reduce: axis " + std::to_string(ax) + " out of range for " + shape_str(xs));
    if (reduced[ax]) throw InvalidAxis("reduce: duplicate axis " + std::to_string(ax));
    reduced[ax] = 1;
  }
  Shape os;
  std::size_t count = 1;
  for (std::size_t d = 0; d < xs.size(); ++d) {
    if (reduced[d]) {
      count *= xs[d];
      if (keepdims) os.push_back(1);
    } else {
      os.push_back(xs[d]);
    }
  }
  const std::size_t osize = shape_size(os);
  const detail::SlotWalker for_each_slot{xs, reduced};

  const auto xv = x.values();
  std::vector<T> out;
  std::vector<std::size_t> argmax;  // only for Max
  if (kind == ReduceKind::Max) {
    constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    out.assign(osize, T(0));
    argmax.assign(osize, npos);
    for_each_slot([&](std::size_t i, std::size_t o) {
      // first-encountered maximizer wins ties
      if (argmax[o] == npos || xv[i] > out[o]) {
        out[o] = xv[i];
        argmax[o] = i;
      }
    });
  } else {
    out.assign(osize, T(0));
    for_each_slot([&](std::size_t i, std::size_t o) { out[o] += xv[i]; });
    if (kind == ReduceKind::Mean) {
      const T inv = T(1) / static_cast<T>(count);
      for (T& v : out) v *= inv;
    }
  }

  std::function<void(detail::TensorNode<T>&)> backprop;
  if (kind == ReduceKind::Max) {
    backprop = [argmax](detail::TensorNode<T>& self) {
      auto& nx = *self.inputs[0];
      nx.ensure_grad();
      for (std::size_t o = 0; o < argmax.size(); ++o) nx.grad[argmax[o]] += self.grad[o];
    };
  } else {
    const T scale = (kind == ReduceKind::Mean) ? T(1) / static_cast<T>(count) : T(1);
    backprop = [for_each_slot, scale](detail::TensorNode<T>& self) {
      auto& nx = *self.inputs[0];
      nx.ensure_grad();
      for_each_slot([&](std::size_t i, std::size_t o) { nx.grad[i] += scale * self.grad[o]; });
    };
  }
  return make_op<T>(std::move(os), std::move(out), {x.node()}, std::move(backprop), "reduce");
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdims = false) {
  return reduce(x, axes, ReduceKind::Sum, keepdims);
}
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdims = false) {
  return reduce(x, axes, ReduceKind::Mean, keepdims);
}
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdims = false) {
  return reduce(x, axes, ReduceKind::Max, keepdims);
}

/// Mean over all axes, yielding a rank-0 scalar.
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(x, axes, ReduceKind::Mean);
}

// ---------------------------------------------------------------------------
// Shape manipulation.

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  for (std::size_t d : shape) {
    if (d < 1) throw InvalidShape("reshape: dimension < 1 in " + shape_str(shape));
  }
  if (shape_size(shape) != x.size())
    throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<T> out(x.values().begin(), x.values().end());
  auto backprop = [](detail::TensorNode<T>& self) {
    auto& nx = *self.inputs[0];
    nx.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i];
  };
  return make_op<T>(std::move(shape), std::move(out), {x.node()}, std::move(backprop), "reshape");
}

/// Concatenates along the last axis. All leading dimensions must agree.
template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || a.rank() == 0)
    throw ShapeMismatch("concat: rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t rank = a.rank();
  for (std::size_t d = 0; d + 1 < rank; ++d) {
    if (a.dim(d) != b.dim(d))
      throw ShapeMismatch("concat: leading dims disagree " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t ca = a.dim(rank - 1), cb = b.dim(rank - 1);
  const std::size_t rows = a.size() / ca;
  Shape os = a.shape();
  os[rank - 1] = ca + cb;
  std::vector<T> out(rows * (ca + cb));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  auto backprop = [rows, ca, cb](detail::TensorNode<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.needs_grad) {
      na.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) na.grad[r * ca + c] += self.grad[r * (ca + cb) + c];
    }
    if (nb.needs_grad) {
      nb.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) nb.grad[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
    }
  };
  return make_op<T>(std::move(os), std::move(out), {a.node(), b.node()}, std::move(backprop), "concat");
}

// ---------------------------------------------------------------------------
// Reverse pass.

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.empty()) throw Error("backward: empty tensor");
  const auto& root = loss.node();
  if (root->values.size() != 1) throw NotScalar("backward: loss has " + std::to_string(root->values.size()) + " elements");
  if (!root->needs_grad)
    throw DisconnectedGraph("backward: loss is not connected to any tensor that requires gradients");

  Graph<T> g = Graph<T>::trace(loss);
  for (auto& n : g.nodes) {
    if (!n->needs_grad) continue;
    if (n->is_leaf()) {
      n->ensure_grad();  // leaf gradients accumulate across backward calls
    } else {
      n->grad.assign(n->values.size(), T(0));
    }
  }
  root->grad[0] += T(1);
  for (auto it = g.nodes.rbegin(); it != g.nodes.rend(); ++it) {
    auto& n = **it;
    if (n.backprop && n.needs_grad) n.backprop(n);
  }
}

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences. Meant to run with
// T = double; float lacks the headroom for the difference quotient.

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool passed = false;
};

template <typename T, typename F>
GradCheckResult grad_check(F&& f, std::vector<Tensor<T>> params, double eps = 1e-5, double tol = 1e-4) {
  if (!(eps > 0)) throw InvalidEps("grad_check: eps must be > 0");

  for (auto& p : params) p.zero_grad();
  Tensor<T> out = f();
  backward(out);
  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.size(), T(0));
  }

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      vals[i] = orig + static_cast<T>(eps);
      const double fp = static_cast<double>(f().item());
      vals[i] = orig - static_cast<T>(eps);
      const double fm = static_cast<double>(f().item());
      vals[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = static_cast<double>(analytic[pi][i]);
      const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      res.max_rel_error = std::max(res.max_rel_error, rel);
    }
  }
  res.passed = res.max_rel_error < tol;
  return res;
}

}  // namespace inamp

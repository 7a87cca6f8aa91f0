#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "feae/errors.hpp"
#include "feae/matrix.hpp"
#include "feae/rng.hpp"

namespace feae {

/// A trainable weight with its gradient and Adam moment estimates.
template <class T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  Matrix<T> adam_m;
  Matrix<T> adam_v;
  std::uint64_t step = 0;

  Param() = default;
  Param(std::string n, Matrix<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(T(0)); }

  template <class U>
  Param<U> cast() const {
    Param<U> p(name, value.template cast<U>());
    p.grad = grad.template cast<U>();
    p.adam_m = adam_m.template cast<U>();
    p.adam_v = adam_v.template cast<U>();
    p.step = step;
    return p;
  }
};

/// Glorot-uniform samples in +-sqrt(6 / (rows + cols)).
template <class T>
Matrix<T> xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0)
    throw DimensionError("xavier_init needs positive dimensions, got " +
                         Matrix<T>::shape_string(rows, cols));
  const double bound = std::sqrt(6.0 / double(rows + cols));
  Matrix<T> m(rows, cols);
  for (auto& v : m.data()) v = T(rng.uniform(-bound, bound));
  return m;
}

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const { return tape->value(*this); }
  const Matrix<T>& grad() const { return tape->grad(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode recording of matrix operations. Single owner, not thread-safe.
template <class T>
class Tape {
 public:
  // Receives the gradient of the node's output and accumulates into operands.
  using BackwardFn = std::function<void(Tape&, const Matrix<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, nullptr, {}); }

  /// Leaf bound to `p`; repeated calls with the same Param reuse one node.
  Var<T> param(Param<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    auto v = push(p.value, true, &p, {});
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Records a derived value. `backward` is dropped when no operand needs a gradient.
  Var<T> record(Matrix<T> value, bool requires_grad, BackwardFn backward) {
    if (!value.all_finite())
      throw NumericError("non-finite value produced by a recorded operation (shape " +
                         value.shape() + ")");
    return push(std::move(value), requires_grad, nullptr,
                requires_grad ? std::move(backward) : BackwardFn{});
  }

  const Matrix<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient buffer of `v`, allocated as zeros on first access.
  Matrix<T>& grad(Var<T> v) {
    auto& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size()) n.grad = Matrix<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }
  const Matrix<T>& grad(Var<T> v) const { return const_cast<Tape*>(this)->grad(v); }

  std::size_t size() const { return nodes_.size(); }

  /// Node ids visited by the last backward() call, in visit order.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

  /// Seeds d(loss)/d(loss) = 1, walks the tape in reverse recording order and
  /// accumulates leaf gradients into the bound Params.
  void backward(Var<T> loss) {
    if (value(loss).size() != 1)
      throw DimensionError("backward needs a 1x1 loss, got " + value(loss).shape());
    backward_order_.clear();
    grad(loss).fill(T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.size() != n.value.size()) continue;
      backward_order_.push_back(i);
      n.backward(*this, n.grad);
    }
    for (auto& [p, id] : param_nodes_) {
      const auto& n = nodes_[id];
      if (n.grad.size() != n.value.size()) continue;
      auto& g = p->grad.data();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.data()[k];
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Param<T>* param = nullptr;
    BackwardFn backward;
  };

  Var<T> push(Matrix<T> value, bool requires_grad, Param<T>* p, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, p, std::move(fn)});
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<Param<T>*, std::size_t> param_nodes_;
  std::vector<std::size_t> backward_order_;
};

// ---------------------------------------------------------------------------
// Primitive differentiable operations.

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul shape mismatch: " + av.shape() + " times " + bv.shape());
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(matmul(av, bv), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a))
      gemm_accumulate(g, Transpose::No, tp.value(b), Transpose::Yes, tp.grad(a));
    if (tp.requires_grad(b))
      gemm_accumulate(tp.value(a), Transpose::Yes, g, Transpose::No, tp.grad(b));
  });
}

/// a * b^T.
template <class T>
Var<T> matmul_transposed(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols())
    throw DimensionError("matmul shape mismatch: " + av.shape() + " times transpose of " +
                         bv.shape());
  Matrix<T> out(av.rows(), bv.rows());
  gemm_accumulate(av, Transpose::No, bv, Transpose::Yes, out);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a))
      gemm_accumulate(g, Transpose::No, tp.value(b), Transpose::No, tp.grad(a));
    if (tp.requires_grad(b))
      gemm_accumulate(g, Transpose::Yes, tp.value(a), Transpose::No, tp.grad(b));
  });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <class T>
Var<T> relu(Var<T> a) {
  auto& t = *a.tape;
  Matrix<T> out = a.value();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return t.record(std::move(out), t.requires_grad(a), [a](Tape<T>& tp, const Matrix<T>& g) {
    const auto& x = tp.value(a).data();
    auto& ga = tp.grad(a).data();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > T(0)) ga[i] += g.data()[i];
  });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  auto& t = *a.tape;
  Matrix<T> out = a.value();
  for (auto& v : out.data()) v = sigmoid_scalar(v);
  const std::size_t self = t.size();
  return t.record(std::move(out), t.requires_grad(a),
                  [a, self](Tape<T>& tp, const Matrix<T>& g) {
                    const auto& y = tp.value(Var<T>{&tp, self}).data();
                    auto& ga = tp.grad(a).data();
                    for (std::size_t i = 0; i < y.size(); ++i)
                      ga[i] += g.data()[i] * y[i] * (T(1) - y[i]);
                  });
}

/// Adds a 1 x cols bias row to every row of `a`.
template <class T>
Var<T> add_row_bias(Var<T> a, Var<T> bias) {
  auto& t = *a.tape;
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw DimensionError("bias shape " + bv.shape() + " does not fit " + av.shape());
  Matrix<T> out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  const bool rg = t.requires_grad(a) || t.requires_grad(bias);
  return t.record(std::move(out), rg, [a, bias](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad(a).data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data()[i];
    }
    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
    }
  });
}

/// Column means as a 1 x cols row.
template <class T>
Var<T> mean_rows(Var<T> a) {
  auto& t = *a.tape;
  const auto& av = a.value();
  if (av.rows() == 0) throw PreconditionError("mean over zero rows");
  Matrix<T> out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(0, c) += av(r, c);
  const T inv = T(1) / T(av.rows());
  for (auto& v : out.data()) v *= inv;
  return t.record(std::move(out), t.requires_grad(a), [a, inv](Tape<T>& tp, const Matrix<T>& g) {
    auto& ga = tp.grad(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(0, c) * inv;
  });
}

template <class T>
Var<T> sum(Var<T> a) {
  auto& t = *a.tape;
  T s = T(0);
  for (T v : a.value().data()) s += v;
  return t.record(Matrix<T>(1, 1, s), t.requires_grad(a), [a](Tape<T>& tp, const Matrix<T>& g) {
    for (auto& v : tp.grad(a).data()) v += g(0, 0);
  });
}

/// sum(a .* weights) for a constant weight matrix.
template <class T>
Var<T> weighted_sum(Var<T> a, Matrix<T> weights) {
  auto& t = *a.tape;
  if (!a.value().same_shape(weights))
    throw DimensionError("weighted_sum shape mismatch: " + a.value().shape() + " vs " +
                         weights.shape());
  T s = T(0);
  for (std::size_t i = 0; i < weights.size(); ++i) s += a.value().data()[i] * weights.data()[i];
  return t.record(Matrix<T>(1, 1, s), t.requires_grad(a),
                  [a, w = std::move(weights)](Tape<T>& tp, const Matrix<T>& g) {
                    auto& ga = tp.grad(a).data();
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g(0, 0) * w.data()[i];
                  });
}

template <class T>
Var<T> sum_squares(Var<T> a) {
  auto& t = *a.tape;
  T s = T(0);
  for (T v : a.value().data()) s += v * v;
  return t.record(Matrix<T>(1, 1, s), t.requires_grad(a), [a](Tape<T>& tp, const Matrix<T>& g) {
    const auto& x = tp.value(a).data();
    auto& ga = tp.grad(a).data();
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += T(2) * x[i] * g(0, 0);
  });
}

/// sum_i coeffs[i] * terms[i] over 1x1 values.
template <class T>
Var<T> linear_combination(const std::vector<Var<T>>& terms, const std::vector<T>& coeffs) {
  if (terms.empty() || terms.size() != coeffs.size())
    throw DimensionError("linear_combination needs matching non-empty term/coefficient lists");
  auto& t = *terms.front().tape;
  T s = T(0);
  bool rg = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1)
      throw DimensionError("linear_combination term is not 1x1: " + terms[i].value().shape());
    s += coeffs[i] * terms[i].value()(0, 0);
    rg = rg || t.requires_grad(terms[i]);
  }
  return t.record(Matrix<T>(1, 1, s), rg, [terms, coeffs](Tape<T>& tp, const Matrix<T>& g) {
    for (std::size_t i = 0; i < terms.size(); ++i)
      if (tp.requires_grad(terms[i])) tp.grad(terms[i])(0, 0) += coeffs[i] * g(0, 0);
  });
}

}  // namespace feae

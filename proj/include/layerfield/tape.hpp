#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "layerfield/tensor.hpp"

namespace lf {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; the free functions below build
// graphs expression-style: auto y = sigmoid(add(matmul(x, w), b)).
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape; }
};

// Dynamic reverse-mode tape, recorded per forward pass. Node values are
// immutable once written; backward() accumulates adjoints by summation in
// reverse creation order (creation order is a topological order).
template <typename T>
class Tape {
 public:
  Var<T> constant(Tensor<T> v) { return push(std::move(v), false); }
  Var<T> constant_scalar(T v) { return push(Tensor<T>::scalar(v), false); }

  // Leaf parameter: copies the tensor in and marks it differentiable.
  Var<T> leaf(const Tensor<T>& v) { return push(Tensor<T>(v), true); }

  Var<T> push(Tensor<T> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), {}, requires_grad, nullptr});
    return Var<T>{this, int(nodes_.size()) - 1};
  }

  void set_backward(Var<T> v, std::function<void()> fn) {
    nodes_[size_t(v.id)].backward = std::move(fn);
  }

  const Tensor<T>& value(int id) const { return nodes_[size_t(id)].value; }
  bool requires_grad(int id) const { return nodes_[size_t(id)].requires_grad; }

  std::vector<T>& grad_buf(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), T(0));
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[size_t(id)].grad.empty(); }

  // Reverse sweep from a scalar loss. Leaf gradients are read back with
  // grad(); intermediate adjoints die with the tape.
  void backward(Var<T> loss) {
    require(loss.tape == this, "backward: var belongs to a different tape");
    const Node& ln = nodes_[size_t(loss.id)];
    require(ln.value.numel() == 1, "backward: loss must be a scalar");
    require(ln.requires_grad, "backward: loss does not depend on any differentiable leaf");
    require_numeric(std::isfinite(double(ln.value.data[0])), "backward: loss is not finite");
    grad_buf(loss.id)[0] += T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward();
    }
  }

  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[size_t(v.id)];
    Tensor<T> g(n.value.shape);
    if (!n.grad.empty()) g.data = n.grad;
    return g;
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Op library. Every op records its backward closure only when some input
// requires a gradient, so constant-only subgraphs cost a plain evaluation.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  require(a.valid() && b.valid() && a.tape == b.tape, "op across tapes or on invalid vars");
  return *a.tape;
}

template <typename T>
void check_same_shape(Var<T> a, Var<T> b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

// --- elementwise binary ------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (size_t i = 0; i < av.size(); ++i) out.data[i] = av[i] + bv[i];
  const bool rg = tp.requires_grad(a.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, ai, bi, oi] {
      const auto& g = t->grad_buf(oi);
      if (t->requires_grad(ai)) {
        auto& ga = t->grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t->requires_grad(bi)) {
        auto& gb = t->grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return o;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (size_t i = 0; i < av.size(); ++i) out.data[i] = av[i] - bv[i];
  const bool rg = tp.requires_grad(a.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, ai, bi, oi] {
      const auto& g = t->grad_buf(oi);
      if (t->requires_grad(ai)) {
        auto& ga = t->grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t->requires_grad(bi)) {
        auto& gb = t->grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return o;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (size_t i = 0; i < av.size(); ++i) out.data[i] = av[i] * bv[i];
  const bool rg = tp.requires_grad(a.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, ai, bi, oi] {
      const auto& g = t->grad_buf(oi);
      const auto& av2 = t->value(ai).data;
      const auto& bv2 = t->value(bi).data;
      if (t->requires_grad(ai)) {
        auto& ga = t->grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (t->requires_grad(bi)) {
        auto& gb = t->grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    });
  }
  return o;
}

// --- elementwise unary -------------------------------------------------------

// fwd: y = f(x); dfdy: local derivative as a function of (x, y).
template <typename T, typename F, typename D>
Var<T> unary_op(Var<T> a, F fwd, D dfdy) {
  Tape<T>& tp = *a.tape;
  Tensor<T> out(a.shape());
  const auto& av = a.value().data;
  for (size_t i = 0; i < av.size(); ++i) out.data[i] = fwd(av[i]);
  const bool rg = tp.requires_grad(a.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, oi = o.id;
    tp.set_backward(o, [t, ai, oi, dfdy] {
      const auto& g = t->grad_buf(oi);
      const auto& x = t->value(ai).data;
      const auto& y = t->value(oi).data;
      auto& ga = t->grad_buf(ai);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdy(x[i], y[i]);
    });
  }
  return o;
}

template <typename T>
Var<T> neg(Var<T> a) {
  return unary_op(
      a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return unary_op(
      a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> offset(Var<T> a, T c) {
  return unary_op(
      a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> square(Var<T> a) {
  return unary_op(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> abs(Var<T> a) {
  return unary_op(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> sin(Var<T> a) {
  return unary_op(
      a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
}

template <typename T>
Var<T> cos(Var<T> a) {
  return unary_op(
      a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary_op(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// softplus(x) = log(1 + e^x), numerically stable on both tails.
template <typename T>
Var<T> softplus(Var<T> a) {
  return unary_op(
      a,
      [](T x) {
        if (x > T(20)) return x;
        if (x < T(-20)) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](T x, T) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      });
}

template <typename T>
Var<T> silu(Var<T> a) {
  return unary_op(
      a,
      [](T x) {
        const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        return x * s;
      },
      [](T x, T) {
        const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        return s * (T(1) + x * (T(1) - s));
      });
}

// --- broadcast helpers ---------------------------------------------------

// X[N,M] + row vector b[M].
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
  Tape<T>& tp = detail::tape_of(x, b);
  require(x.shape().size() == 2 && b.value().numel() == x.shape()[1],
          "add_rowvec: want [N,M] and [M]");
  const int64_t n = x.shape()[0], m = x.shape()[1];
  Tensor<T> out(x.shape());
  const auto& xv = x.value().data;
  const auto& bv = b.value().data;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.data[size_t(i * m + j)] = xv[size_t(i * m + j)] + bv[size_t(j)];
  const bool rg = tp.requires_grad(x.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, xi, bi, oi, n, m] {
      const auto& g = t->grad_buf(oi);
      if (t->requires_grad(xi)) {
        auto& gx = t->grad_buf(xi);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (t->requires_grad(bi)) {
        auto& gb = t->grad_buf(bi);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < m; ++j) gb[size_t(j)] += g[size_t(i * m + j)];
      }
    });
  }
  return o;
}

// Scale each row of X[N,M] by a constant (no gradient toward the scales).
template <typename T>
Var<T> scale_rows_const(Var<T> x, std::vector<T> s) {
  Tape<T>& tp = *x.tape;
  require(x.shape().size() == 2 && int64_t(s.size()) == x.shape()[0],
          "scale_rows_const: want [N,M] and N scales");
  const int64_t n = x.shape()[0], m = x.shape()[1];
  Tensor<T> out(x.shape());
  const auto& xv = x.value().data;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.data[size_t(i * m + j)] = xv[size_t(i * m + j)] * s[size_t(i)];
  const bool rg = tp.requires_grad(x.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, oi = o.id;
    auto sc = std::make_shared<std::vector<T>>(std::move(s));
    tp.set_backward(o, [t, xi, oi, n, m, sc] {
      const auto& g = t->grad_buf(oi);
      auto& gx = t->grad_buf(xi);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) gx[size_t(i * m + j)] += g[size_t(i * m + j)] * (*sc)[size_t(i)];
    });
  }
  return o;
}

// --- matrix multiply -------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tape<T>& tp = detail::tape_of(a, b);
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[0],
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor<T> out({n, m});
  {
    Eigen::Map<const EigenMat> A(a.value().data.data(), n, k);
    Eigen::Map<const EigenMat> B(b.value().data.data(), k, m);
    Eigen::Map<EigenMat> O(out.data.data(), n, m);
    O.noalias() = A * B;
  }
  const bool rg = tp.requires_grad(a.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, ai, bi, oi, n, k, m] {
      Eigen::Map<const EigenMat> G(t->grad_buf(oi).data(), n, m);
      if (t->requires_grad(ai)) {
        Eigen::Map<const EigenMat> B(t->value(bi).data.data(), k, m);
        Eigen::Map<EigenMat> GA(t->grad_buf(ai).data(), n, k);
        GA.noalias() += G * B.transpose();
      }
      if (t->requires_grad(bi)) {
        Eigen::Map<const EigenMat> A(t->value(ai).data.data(), n, k);
        Eigen::Map<EigenMat> GB(t->grad_buf(bi).data(), k, m);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return o;
}

// --- reductions --------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>& tp = *a.tape;
  T acc = T(0);
  for (T v : a.value().data) acc += v;
  const bool rg = tp.requires_grad(a.id);
  Var<T> o = tp.push(Tensor<T>::scalar(acc), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, oi = o.id;
    tp.set_backward(o, [t, ai, oi] {
      const T g = t->grad_buf(oi)[0];
      auto& ga = t->grad_buf(ai);
      for (auto& v : ga) v += g;
    });
  }
  return o;
}

template <typename T>
Var<T> mean(Var<T> a) {
  const int64_t n = a.value().numel();
  return scale(sum(a), T(1) / T(n));
}

// Sum of consecutive groups of `group` elements over the flattened input.
// [R*S] -> [R] with group = S (also used as a row reduction for matrices).
template <typename T>
Var<T> sum_groups(Var<T> a, int64_t group) {
  Tape<T>& tp = *a.tape;
  const int64_t n = a.value().numel();
  require(group > 0 && n % group == 0, "sum_groups: group must divide numel");
  const int64_t r = n / group;
  Tensor<T> out({r});
  const auto& av = a.value().data;
  for (int64_t i = 0; i < r; ++i) {
    T acc = T(0);
    for (int64_t s = 0; s < group; ++s) acc += av[size_t(i * group + s)];
    out[i] = acc;
  }
  const bool rg = tp.requires_grad(a.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, oi = o.id;
    tp.set_backward(o, [t, ai, oi, r, group] {
      const auto& g = t->grad_buf(oi);
      auto& ga = t->grad_buf(ai);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t s = 0; s < group; ++s) ga[size_t(i * group + s)] += g[size_t(i)];
    });
  }
  return o;
}

// Grouped weighted sum: w flattened [R*S], c [R*S, M] -> out[r, j] =
// sum_s w[r*S+s] * c[r*S+s, j]. This is the alpha-compositing accumulator.
template <typename T>
Var<T> weighted_sum_groups(Var<T> w, Var<T> c, int64_t group) {
  Tape<T>& tp = detail::tape_of(w, c);
  const int64_t n = w.value().numel();
  require(c.shape().size() == 2 && c.shape()[0] == n, "weighted_sum_groups: want w[N], c[N,M]");
  require(group > 0 && n % group == 0, "weighted_sum_groups: group must divide N");
  const int64_t r = n / group, m = c.shape()[1];
  Tensor<T> out({r, m});
  const auto& wv = w.value().data;
  const auto& cv = c.value().data;
  for (int64_t i = 0; i < r; ++i)
    for (int64_t s = 0; s < group; ++s) {
      const int64_t row = i * group + s;
      const T wk = wv[size_t(row)];
      for (int64_t j = 0; j < m; ++j) out.data[size_t(i * m + j)] += wk * cv[size_t(row * m + j)];
    }
  const bool rg = tp.requires_grad(w.id) || tp.requires_grad(c.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int wi = w.id, ci = c.id, oi = o.id;
    tp.set_backward(o, [t, wi, ci, oi, r, m, group] {
      const auto& g = t->grad_buf(oi);
      const auto& wv2 = t->value(wi).data;
      const auto& cv2 = t->value(ci).data;
      const bool gw = t->requires_grad(wi), gc = t->requires_grad(ci);
      auto* pgw = gw ? &t->grad_buf(wi) : nullptr;
      auto* pgc = gc ? &t->grad_buf(ci) : nullptr;
      for (int64_t i = 0; i < r; ++i)
        for (int64_t s = 0; s < group; ++s) {
          const int64_t row = i * group + s;
          for (int64_t j = 0; j < m; ++j) {
            const T gij = g[size_t(i * m + j)];
            if (gw) (*pgw)[size_t(row)] += gij * cv2[size_t(row * m + j)];
            if (gc) (*pgc)[size_t(row * m + j)] += gij * wv2[size_t(row)];
          }
        }
    });
  }
  return o;
}

// Exclusive cumulative product within consecutive groups: out[0] = 1,
// out[s] = prod_{k<s} q[k]. This is the transmittance along a ray. The
// backward pass uses the division-free suffix recurrence so fully opaque
// samples (q = 0) stay differentiable.
template <typename T>
Var<T> cumprod_exclusive_groups(Var<T> q, int64_t group) {
  Tape<T>& tp = *q.tape;
  const int64_t n = q.value().numel();
  require(group > 0 && n % group == 0, "cumprod_exclusive_groups: group must divide numel");
  const int64_t r = n / group;
  Tensor<T> out({n});
  const auto& qv = q.value().data;
  for (int64_t i = 0; i < r; ++i) {
    T p = T(1);
    for (int64_t s = 0; s < group; ++s) {
      out[i * group + s] = p;
      p *= qv[size_t(i * group + s)];
    }
  }
  const bool rg = tp.requires_grad(q.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int qi = q.id, oi = o.id;
    tp.set_backward(o, [t, qi, oi, r, group] {
      const auto& g = t->grad_buf(oi);
      const auto& qv2 = t->value(qi).data;
      const auto& pv = t->value(oi).data;
      auto& gq = t->grad_buf(qi);
      for (int64_t i = 0; i < r; ++i) {
        // A[j] = g[j+1] + q[j+1] * A[j+1]; dq[j] = P[j] * A[j]
        T a = T(0);
        for (int64_t j = group - 2; j >= 0; --j) {
          const int64_t k = i * group + j;
          a = g[size_t(k + 1)] + qv2[size_t(k + 1)] * a;
          gq[size_t(k)] += pv[size_t(k)] * a;
        }
      }
    });
  }
  return o;
}

// --- structure ---------------------------------------------------------------

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  Tape<T>& tp = detail::tape_of(a, b);
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[0] == b.shape()[0],
          "concat_cols: want [N,A],[N,B]");
  const int64_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  Tensor<T> out({n, ca + cb});
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < ca; ++j) out.data[size_t(i * (ca + cb) + j)] = av[size_t(i * ca + j)];
    for (int64_t j = 0; j < cb; ++j) out.data[size_t(i * (ca + cb) + ca + j)] = bv[size_t(i * cb + j)];
  }
  const bool rg = tp.requires_grad(a.id) || tp.requires_grad(b.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, bi = b.id, oi = o.id;
    tp.set_backward(o, [t, ai, bi, oi, n, ca, cb] {
      const auto& g = t->grad_buf(oi);
      if (t->requires_grad(ai)) {
        auto& ga = t->grad_buf(ai);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < ca; ++j) ga[size_t(i * ca + j)] += g[size_t(i * (ca + cb) + j)];
      }
      if (t->requires_grad(bi)) {
        auto& gb = t->grad_buf(bi);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < cb; ++j) gb[size_t(i * cb + j)] += g[size_t(i * (ca + cb) + ca + j)];
      }
    });
  }
  return o;
}

template <typename T>
Var<T> reshape(Var<T> a, Shape s) {
  Tape<T>& tp = *a.tape;
  require(shape_numel(s) == a.value().numel(), "reshape: element count mismatch");
  Tensor<T> out(std::move(s), std::vector<T>(a.value().data));
  const bool rg = tp.requires_grad(a.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int ai = a.id, oi = o.id;
    tp.set_backward(o, [t, ai, oi] {
      const auto& g = t->grad_buf(oi);
      auto& ga = t->grad_buf(ai);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return o;
}

// Positional encoding gamma(x) = [x, sin(2^l pi x), cos(2^l pi x)]_{l<L},
// applied per component of x[N,D] -> [N, D*(1+2L)].
template <typename T>
Var<T> positional_encoding(Var<T> x, int levels) {
  require(levels >= 0, "positional_encoding: L must be >= 0");
  Tape<T>& tp = *x.tape;
  require(x.shape().size() == 2, "positional_encoding: want [N,D]");
  const int64_t n = x.shape()[0], d = x.shape()[1];
  const int64_t od = d * (1 + 2 * int64_t(levels));
  Tensor<T> out({n, od});
  const auto& xv = x.value().data;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      const T v = xv[size_t(i * d + j)];
      T* row = &out.data[size_t(i * od)];
      row[j] = v;
      T freq = T(M_PI);
      for (int l = 0; l < levels; ++l) {
        row[d + 2 * (int64_t(l) * d + j)] = std::sin(freq * v);
        row[d + 2 * (int64_t(l) * d + j) + 1] = std::cos(freq * v);
        freq *= T(2);
      }
    }
  }
  const bool rg = tp.requires_grad(x.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int xi = x.id, oi = o.id;
    tp.set_backward(o, [t, xi, oi, n, d, od, levels] {
      const auto& g = t->grad_buf(oi);
      const auto& xv2 = t->value(xi).data;
      auto& gx = t->grad_buf(xi);
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
          const T v = xv2[size_t(i * d + j)];
          const T* grow = &g[size_t(i * od)];
          T acc = grow[j];
          T freq = T(M_PI);
          for (int l = 0; l < levels; ++l) {
            const T s = std::sin(freq * v), c = std::cos(freq * v);
            acc += grow[d + 2 * (int64_t(l) * d + j)] * freq * c;
            acc -= grow[d + 2 * (int64_t(l) * d + j) + 1] * freq * s;
            freq *= T(2);
          }
          gx[size_t(i * d + j)] += acc;
        }
      }
    });
  }
  return o;
}

// Differentiable bilinear lookup into a feature plane. positions are
// continuous (x=column, y=row) grid coordinates, clamped to the edge;
// channels [c0, c1) of plane [H,W,C] are gathered per position.
template <typename T>
Var<T> bilinear_gather(Var<T> plane, const std::vector<double>& xy, int64_t c0, int64_t c1) {
  Tape<T>& tp = *plane.tape;
  require(plane.shape().size() == 3, "bilinear_gather: plane must be [H,W,C]");
  const int64_t h = plane.shape()[0], w = plane.shape()[1], c = plane.shape()[2];
  require(0 <= c0 && c0 < c1 && c1 <= c, "bilinear_gather: bad channel range");
  require(xy.size() % 2 == 0, "bilinear_gather: positions are (x, y) pairs");
  const int64_t p = int64_t(xy.size()) / 2;
  const int64_t oc = c1 - c0;

  // Per-sample corner indices and weights, shared with the backward pass.
  struct Corner {
    int64_t i00, i01, i10, i11;  // row offsets into the plane (element index / C)
    T w00, w01, w10, w11;
  };
  auto corners = std::make_shared<std::vector<Corner>>(size_t(p));
  const auto& pv = plane.value().data;
  Tensor<T> out({p, oc});
  for (int64_t k = 0; k < p; ++k) {
    double x = std::min(std::max(xy[size_t(2 * k)], 0.0), double(w - 1));
    double y = std::min(std::max(xy[size_t(2 * k + 1)], 0.0), double(h - 1));
    const int64_t x0 = std::min(int64_t(x), w - 2 >= 0 ? w - 2 : 0);
    const int64_t y0 = std::min(int64_t(y), h - 2 >= 0 ? h - 2 : 0);
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const T fx = T(x - double(x0)), fy = T(y - double(y0));
    Corner co;
    co.i00 = (y0 * w + x0) * c;
    co.i01 = (y0 * w + x1) * c;
    co.i10 = (y1 * w + x0) * c;
    co.i11 = (y1 * w + x1) * c;
    co.w00 = (T(1) - fx) * (T(1) - fy);
    co.w01 = fx * (T(1) - fy);
    co.w10 = (T(1) - fx) * fy;
    co.w11 = fx * fy;
    (*corners)[size_t(k)] = co;
    for (int64_t j = 0; j < oc; ++j) {
      out.data[size_t(k * oc + j)] = co.w00 * pv[size_t(co.i00 + c0 + j)] +
                                     co.w01 * pv[size_t(co.i01 + c0 + j)] +
                                     co.w10 * pv[size_t(co.i10 + c0 + j)] +
                                     co.w11 * pv[size_t(co.i11 + c0 + j)];
    }
  }
  const bool rg = tp.requires_grad(plane.id);
  Var<T> o = tp.push(std::move(out), rg);
  if (rg) {
    Tape<T>* t = &tp;
    int pi = plane.id, oi = o.id;
    tp.set_backward(o, [t, pi, oi, corners, p, oc, c0] {
      const auto& g = t->grad_buf(oi);
      auto& gp = t->grad_buf(pi);
      for (int64_t k = 0; k < p; ++k) {
        const auto& co = (*corners)[size_t(k)];
        for (int64_t j = 0; j < oc; ++j) {
          const T gk = g[size_t(k * oc + j)];
          gp[size_t(co.i00 + c0 + j)] += co.w00 * gk;
          gp[size_t(co.i01 + c0 + j)] += co.w01 * gk;
          gp[size_t(co.i10 + c0 + j)] += co.w10 * gk;
          gp[size_t(co.i11 + c0 + j)] += co.w11 * gk;
        }
      }
    });
  }
  return o;
}

}  // namespace lf

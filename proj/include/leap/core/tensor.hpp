#pragma once

// Reverse-mode differentiable arrays. Every op builds a node on an implicit
// tape (parent pointers + adjoint closure); backward() walks the tape once in
// reverse topological order. Scalar type is a template parameter: float for
// training, double for gradient verification.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace leap {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Subclasses let callers map failures to distinct process exit codes.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline size_t shape_numel(const std::vector<int>& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw Error("negative dimension in shape " + shape_str(s));
    n *= static_cast<size_t>(d);
  }
  return n;
}

// Tape recording is on by default; disabled inside a NoGradGuard scope
// (inference rollouts, metric evaluation).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <class T>
class Tensor {
 public:
  struct Impl {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated on demand, same length as data
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Impl&)> backward_fn;

    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
  };

  Tensor() = default;

  static Tensor from(std::vector<int> shape, std::vector<T> data,
                     bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw Error("data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
    Tensor t;
    t.im_ = std::make_shared<Impl>();
    t.im_->shape = std::move(shape);
    t.im_->data = std::move(data);
    t.im_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(std::vector<int> shape, T v, bool requires_grad = false) {
    size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return im_ != nullptr; }
  const std::vector<int>& shape() const { return im_->shape; }
  size_t numel() const { return im_->data.size(); }
  std::vector<T>& data() { return im_->data; }
  const std::vector<T>& data() const { return im_->data; }
  std::vector<T>& grad() {
    im_->ensure_grad();
    return im_->grad;
  }
  bool requires_grad() const { return im_->requires_grad; }
  void set_requires_grad(bool v) { im_->requires_grad = v; }
  T item() const {
    if (numel() != 1) throw Error("item() on non-scalar " + shape_str(shape()));
    return im_->data[0];
  }
  void zero_grad() {
    if (!im_->grad.empty()) std::fill(im_->grad.begin(), im_->grad.end(), T(0));
  }

  // A copy sharing no graph history; same storage is duplicated.
  Tensor detach() const { return from(im_->shape, im_->data, false); }

  Impl* impl() const { return im_.get(); }

  static Tensor make_node(std::vector<int> shape, std::vector<T> data,
                          std::vector<Tensor> parents,
                          std::function<void(Impl&)> backward_fn) {
    bool needs = false;
    if (grad_mode())
      for (const auto& p : parents)
        if (p.requires_grad()) needs = true;
    Tensor t = from(std::move(shape), std::move(data), needs);
    if (needs) {
      t.im_->parents = std::move(parents);
      t.im_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

  // Reverse accumulation from a scalar loss. Each reachable node's adjoint
  // closure runs exactly once.
  void backward() {
    if (numel() != 1)
      throw Error("backward requires a scalar loss, got " + shape_str(shape()));
    std::vector<Impl*> order;
    std::unordered_set<Impl*> seen;
    std::vector<std::pair<Impl*, size_t>> stack;
    stack.push_back({im_.get(), 0});
    seen.insert(im_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Impl* p = node->parents[next++].impl();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    // interior adjoints are recomputed from scratch; leaves accumulate
    for (Impl* n : order)
      if (n->backward_fn && !n->grad.empty())
        std::fill(n->grad.begin(), n->grad.end(), T(0));
    im_->ensure_grad();
    im_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }

 private:
  std::shared_ptr<Impl> im_;
};

namespace detail {

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise ----------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  // identical shapes, or one operand a broadcast scalar
  if (a.numel() == 1 && b.numel() != 1) return add(b, a);
  std::vector<T> out(a.data());
  if (b.numel() == 1) {
    T s = b.data()[0];
    for (auto& v : out) v += s;
  } else {
    detail::check_same_shape(a, b, "add");
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  }
  return Tensor<T>::make_node(
      a.shape(), std::move(out), {a, b},
      [](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        auto& pb = *n.parents[1].impl();
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          if (pb.data.size() == 1) {
            T s = 0;
            for (T g : n.grad) s += g;
            pb.grad[0] += s;
          } else {
            for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i];
          }
        }
      });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.numel() == 1 && b.numel() != 1) return mul(b, a);
  std::vector<T> out(a.data());
  if (b.numel() == 1) {
    T s = b.data()[0];
    for (auto& v : out) v *= s;
  } else {
    detail::check_same_shape(a, b, "mul");
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  }
  return Tensor<T>::make_node(
      a.shape(), std::move(out), {a, b},
      [](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        auto& pb = *n.parents[1].impl();
        if (pa.requires_grad) {
          pa.ensure_grad();
          if (pb.data.size() == 1) {
            T s = pb.data[0];
            for (size_t i = 0; i < n.grad.size(); ++i)
              pa.grad[i] += n.grad[i] * s;
          } else {
            for (size_t i = 0; i < n.grad.size(); ++i)
              pa.grad[i] += n.grad[i] * pb.data[i];
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          if (pb.data.size() == 1) {
            T s = 0;
            for (size_t i = 0; i < n.grad.size(); ++i)
              s += n.grad[i] * pa.data[i];
            pb.grad[0] += s;
          } else {
            for (size_t i = 0; i < n.grad.size(); ++i)
              pb.grad[i] += n.grad[i] * pa.data[i];
          }
        }
      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, double c) {
  std::vector<T> out(a.data());
  for (auto& v : out) v *= T(c);
  return Tensor<T>::make_node(
      a.shape(), std::move(out), {a}, [c](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
          pa.grad[i] += n.grad[i] * T(c);
      });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, double c) {
  std::vector<T> out(a.data());
  for (auto& v : out) v += T(c);
  return Tensor<T>::make_node(
      a.shape(), std::move(out), {a}, [](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
      });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, -1.0);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, neg(b));
}

template <class T, class Fwd, class Dfn>
Tensor<T> unary_op(const Tensor<T>& a, Fwd f, Dfn df) {
  std::vector<T> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  return Tensor<T>::make_node(
      a.shape(), std::move(out), {a}, [df](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
          pa.grad[i] += n.grad[i] * df(pa.data[i], n.data[i]);
      });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  for (T v : a.data())
    if (!(v > T(0))) throw Error("log: non-positive input");
  return unary_op(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x >= T(0) ? T(1) : T(-1); });
}

// Gradient passes through inside [lo, hi], is zero at clipped entries.
template <class T>
Tensor<T> clamp(const Tensor<T>& a, double lo, double hi) {
  return unary_op(
      a,
      [lo, hi](T x) { return std::min(std::max(x, T(lo)), T(hi)); },
      [lo, hi](T x, T) { return (x >= T(lo) && x <= T(hi)) ? T(1) : T(0); });
}

// ---- reductions -----------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = std::accumulate(a.data().begin(), a.data().end(), T(0));
  return Tensor<T>::make_node({1}, {s}, {a}, [](typename Tensor<T>::Impl& n) {
    auto& pa = *n.parents[0].impl();
    pa.ensure_grad();
    for (auto& g : pa.grad) g += n.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), 1.0 / double(a.numel()));
}

// ---- shape manipulation ---------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw Error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                shape_str(new_shape));
  std::vector<T> out(a.data());
  return Tensor<T>::make_node(
      std::move(new_shape), std::move(out), {a},
      [](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
      });
}

namespace detail {

// outer size before `axis`, inner size after it
inline std::pair<size_t, size_t> axis_split(const std::vector<int>& shape,
                                            int axis) {
  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= size_t(shape[i]);
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= size_t(shape[i]);
  return {outer, inner};
}

}  // namespace detail

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  const auto& s0 = parts[0].shape();
  if (axis < 0 || axis >= int(s0.size()))
    throw Error("concat: bad axis " + std::to_string(axis));
  int total_axis = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != s0.size())
      throw Error("concat: rank mismatch " + shape_str(p.shape()) + " vs " +
                  shape_str(s0));
    for (size_t d = 0; d < s0.size(); ++d)
      if (int(d) != axis && p.shape()[d] != s0[d])
        throw Error("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                    shape_str(s0));
    total_axis += p.shape()[axis];
  }
  std::vector<int> out_shape = s0;
  out_shape[axis] = total_axis;
  auto [outer, inner] = detail::axis_split(s0, axis);
  std::vector<T> out(shape_numel(out_shape));
  size_t off_axis = 0;
  for (const auto& p : parts) {
    size_t pa = size_t(p.shape()[axis]);
    for (size_t o = 0; o < outer; ++o)
      std::copy(p.data().begin() + o * pa * inner,
                p.data().begin() + (o + 1) * pa * inner,
                out.begin() + (o * size_t(total_axis) + off_axis) * inner);
    off_axis += pa;
  }
  std::vector<size_t> axis_sizes;
  for (const auto& p : parts) axis_sizes.push_back(size_t(p.shape()[axis]));
  return Tensor<T>::make_node(
      std::move(out_shape), std::move(out), parts,
      [outer = outer, inner = inner, total = size_t(total_axis),
       axis_sizes](typename Tensor<T>::Impl& n) {
        size_t off_axis = 0;
        for (size_t k = 0; k < n.parents.size(); ++k) {
          auto& p = *n.parents[k].impl();
          size_t pa = axis_sizes[k];
          if (p.requires_grad) {
            p.ensure_grad();
            for (size_t o = 0; o < outer; ++o) {
              const T* src = n.grad.data() + (o * total + off_axis) * inner;
              T* dst = p.grad.data() + o * pa * inner;
              for (size_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
            }
          }
          off_axis += pa;
        }
      });
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, int start, int len) {
  const auto& s = a.shape();
  if (axis < 0 || axis >= int(s.size()))
    throw Error("slice: bad axis " + std::to_string(axis));
  if (start < 0 || len < 0 || start + len > s[axis])
    throw Error("slice: range [" + std::to_string(start) + "," +
                std::to_string(start + len) + ") outside axis of size " +
                std::to_string(s[axis]));
  auto [outer, inner] = detail::axis_split(s, axis);
  std::vector<int> out_shape = s;
  out_shape[axis] = len;
  std::vector<T> out(outer * size_t(len) * inner);
  for (size_t o = 0; o < outer; ++o)
    std::copy(a.data().begin() + (o * size_t(s[axis]) + start) * inner,
              a.data().begin() + (o * size_t(s[axis]) + start + len) * inner,
              out.begin() + o * size_t(len) * inner);
  return Tensor<T>::make_node(
      std::move(out_shape), std::move(out), {a},
      [outer = outer, inner = inner, full = size_t(s[axis]), start,
       len](typename Tensor<T>::Impl& n) {
        auto& pa = *n.parents[0].impl();
        pa.ensure_grad();
        for (size_t o = 0; o < outer; ++o) {
          const T* src = n.grad.data() + o * size_t(len) * inner;
          T* dst = pa.grad.data() + (o * full + size_t(start)) * inner;
          for (size_t i = 0; i < size_t(len) * inner; ++i) dst[i] += src[i];
        }
      });
}

// ---- linear algebra -------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw Error("matmul: incompatible " + shape_str(a.shape()) + " x " +
                shape_str(b.shape()));
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(size_t(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      T av = a.data()[size_t(i) * k + p];
      if (av == T(0)) continue;
      const T* brow = b.data().data() + size_t(p) * n;
      T* orow = out.data() + size_t(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return Tensor<T>::make_node(
      {m, n}, std::move(out), {a, b},
      [m, k, n](typename Tensor<T>::Impl& node) {
        auto& pa = *node.parents[0].impl();
        auto& pb = *node.parents[1].impl();
        if (pa.requires_grad) {
          pa.ensure_grad();  // dA = dY Bᵀ
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              T g = node.grad[size_t(i) * n + j];
              if (g == T(0)) continue;
              for (int p = 0; p < k; ++p)
                pa.grad[size_t(i) * k + p] += g * pb.data[size_t(p) * n + j];
            }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();  // dB = Aᵀ dY
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              T av = pa.data[size_t(i) * k + p];
              if (av == T(0)) continue;
              for (int j = 0; j < n; ++j)
                pb.grad[size_t(p) * n + j] += av * node.grad[size_t(i) * n + j];
            }
        }
      });
}

// y = W x + b with x:[in], W:[out,in], b:[out]
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.shape().size() != 1 || w.shape().size() != 2 ||
      w.shape()[1] != x.shape()[0] || b.shape() != std::vector<int>{w.shape()[0]})
    throw Error("linear: incompatible x" + shape_str(x.shape()) + " W" +
                shape_str(w.shape()) + " b" + shape_str(b.shape()));
  int out_dim = w.shape()[0], in_dim = w.shape()[1];
  std::vector<T> out(static_cast<size_t>(out_dim));
  for (int o = 0; o < out_dim; ++o) {
    const T* wrow = w.data().data() + size_t(o) * in_dim;
    T acc = b.data()[o];
    for (int i = 0; i < in_dim; ++i) acc += wrow[i] * x.data()[i];
    out[o] = acc;
  }
  return Tensor<T>::make_node(
      {out_dim}, std::move(out), {x, w, b},
      [out_dim, in_dim](typename Tensor<T>::Impl& n) {
        auto& px = *n.parents[0].impl();
        auto& pw = *n.parents[1].impl();
        auto& pb = *n.parents[2].impl();
        if (px.requires_grad) {
          px.ensure_grad();
          for (int o = 0; o < out_dim; ++o) {
            T g = n.grad[o];
            if (g == T(0)) continue;
            const T* wrow = pw.data.data() + size_t(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) px.grad[i] += g * wrow[i];
          }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (int o = 0; o < out_dim; ++o) {
            T g = n.grad[o];
            if (g == T(0)) continue;
            T* wrow = pw.grad.data() + size_t(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) wrow[i] += g * px.data[i];
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int o = 0; o < out_dim; ++o) pb.grad[o] += n.grad[o];
        }
      });
}

// ---- convolution (HWC layout, direct loops) -------------------------------

// x:[H,W,C]  w:[kh,kw,C,OC]  b:[OC]  ->  [Ho,Wo,OC]
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  if (x.shape().size() != 3 || w.shape().size() != 4)
    throw Error("conv2d: expected x[H,W,C] w[kh,kw,C,OC], got x" +
                shape_str(x.shape()) + " w" + shape_str(w.shape()));
  int H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  int kh = w.shape()[0], kw = w.shape()[1], OC = w.shape()[3];
  if (w.shape()[2] != C)
    throw Error("conv2d: channel mismatch x" + shape_str(x.shape()) + " w" +
                shape_str(w.shape()));
  if (b.shape() != std::vector<int>{OC})
    throw Error("conv2d: bias shape " + shape_str(b.shape()));
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw Error("conv2d: empty output");
  std::vector<T> out(size_t(Ho) * Wo * OC);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox) {
      T* op = out.data() + (size_t(oy) * Wo + ox) * OC;
      for (int oc = 0; oc < OC; ++oc) op[oc] = b.data()[oc];
      for (int ky = 0; ky < kh; ++ky) {
        int y = oy * stride - pad + ky;
        if (y < 0 || y >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int xx = ox * stride - pad + kx;
          if (xx < 0 || xx >= W) continue;
          const T* ip = x.data().data() + (size_t(y) * W + xx) * C;
          const T* wp = w.data().data() + (size_t(ky) * kw + kx) * C * OC;
          for (int ic = 0; ic < C; ++ic) {
            T iv = ip[ic];
            const T* wc = wp + size_t(ic) * OC;
            for (int oc = 0; oc < OC; ++oc) op[oc] += iv * wc[oc];
          }
        }
      }
    }
  return Tensor<T>::make_node(
      {Ho, Wo, OC}, std::move(out), {x, w, b},
      [H, W, C, kh, kw, OC, Ho, Wo, stride, pad](typename Tensor<T>::Impl& n) {
        auto& px = *n.parents[0].impl();
        auto& pw = *n.parents[1].impl();
        auto& pb = *n.parents[2].impl();
        bool gx = px.requires_grad, gw = pw.requires_grad;
        if (gx) px.ensure_grad();
        if (gw) pw.ensure_grad();
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              const T* gp = n.grad.data() + (size_t(oy) * Wo + ox) * OC;
              for (int oc = 0; oc < OC; ++oc) pb.grad[oc] += gp[oc];
            }
        }
        if (!gx && !gw) return;
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            const T* gp = n.grad.data() + (size_t(oy) * Wo + ox) * OC;
            for (int ky = 0; ky < kh; ++ky) {
              int y = oy * stride - pad + ky;
              if (y < 0 || y >= H) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int xx = ox * stride - pad + kx;
                if (xx < 0 || xx >= W) continue;
                size_t ibase = (size_t(y) * W + xx) * C;
                size_t wbase = (size_t(ky) * kw + kx) * C * OC;
                for (int ic = 0; ic < C; ++ic) {
                  if (gx) {
                    T acc = 0;
                    const T* wc = pw.data.data() + wbase + size_t(ic) * OC;
                    for (int oc = 0; oc < OC; ++oc) acc += gp[oc] * wc[oc];
                    px.grad[ibase + ic] += acc;
                  }
                  if (gw) {
                    T iv = px.data[ibase + ic];
                    T* wc = pw.grad.data() + wbase + size_t(ic) * OC;
                    for (int oc = 0; oc < OC; ++oc) wc[oc] += gp[oc] * iv;
                  }
                }
              }
            }
          }
      });
}

// Transposed convolution (adjoint of conv2d's input map).
// x:[H,W,C]  w:[kh,kw,C,OC]  ->  [stride*(H-1)+kh-2*pad, ..., OC]
template <class T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, int stride, int pad) {
  if (x.shape().size() != 3 || w.shape().size() != 4)
    throw Error("conv2d_transpose: expected x[H,W,C] w[kh,kw,C,OC]");
  int H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  int kh = w.shape()[0], kw = w.shape()[1], OC = w.shape()[3];
  if (w.shape()[2] != C)
    throw Error("conv2d_transpose: channel mismatch x" + shape_str(x.shape()) +
                " w" + shape_str(w.shape()));
  int Ho = stride * (H - 1) + kh - 2 * pad;
  int Wo = stride * (W - 1) + kw - 2 * pad;
  if (Ho <= 0 || Wo <= 0) throw Error("conv2d_transpose: empty output");
  std::vector<T> out(size_t(Ho) * Wo * OC);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int oc = 0; oc < OC; ++oc)
        out[(size_t(oy) * Wo + ox) * OC + oc] = b.data()[oc];
  for (int iy = 0; iy < H; ++iy)
    for (int ix = 0; ix < W; ++ix) {
      const T* ip = x.data().data() + (size_t(iy) * W + ix) * C;
      for (int ky = 0; ky < kh; ++ky) {
        int oy = iy * stride - pad + ky;
        if (oy < 0 || oy >= Ho) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ox = ix * stride - pad + kx;
          if (ox < 0 || ox >= Wo) continue;
          T* op = out.data() + (size_t(oy) * Wo + ox) * OC;
          const T* wp = w.data().data() + (size_t(ky) * kw + kx) * C * OC;
          for (int ic = 0; ic < C; ++ic) {
            T iv = ip[ic];
            const T* wc = wp + size_t(ic) * OC;
            for (int oc = 0; oc < OC; ++oc) op[oc] += iv * wc[oc];
          }
        }
      }
    }
  return Tensor<T>::make_node(
      {Ho, Wo, OC}, std::move(out), {x, w, b},
      [H, W, C, kh, kw, OC, Ho, Wo, stride, pad](typename Tensor<T>::Impl& n) {
        auto& px = *n.parents[0].impl();
        auto& pw = *n.parents[1].impl();
        auto& pb = *n.parents[2].impl();
        bool gx = px.requires_grad, gw = pw.requires_grad;
        if (gx) px.ensure_grad();
        if (gw) pw.ensure_grad();
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox)
              for (int oc = 0; oc < OC; ++oc)
                pb.grad[oc] += n.grad[(size_t(oy) * Wo + ox) * OC + oc];
        }
        if (!gx && !gw) return;
        for (int iy = 0; iy < H; ++iy)
          for (int ix = 0; ix < W; ++ix) {
            size_t ibase = (size_t(iy) * W + ix) * C;
            for (int ky = 0; ky < kh; ++ky) {
              int oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= Ho) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ox = ix * stride - pad + kx;
                if (ox < 0 || ox >= Wo) continue;
                const T* gp = n.grad.data() + (size_t(oy) * Wo + ox) * OC;
                size_t wbase = (size_t(ky) * kw + kx) * C * OC;
                for (int ic = 0; ic < C; ++ic) {
                  if (gx) {
                    T acc = 0;
                    const T* wc = pw.data.data() + wbase + size_t(ic) * OC;
                    for (int oc = 0; oc < OC; ++oc) acc += gp[oc] * wc[oc];
                    px.grad[ibase + ic] += acc;
                  }
                  if (gw) {
                    T iv = px.data[ibase + ic];
                    T* wc = pw.grad.data() + wbase + size_t(ic) * OC;
                    for (int oc = 0; oc < OC; ++oc) wc[oc] += gp[oc] * iv;
                  }
                }
              }
            }
          }
      });
}

// ---- convenience ----------------------------------------------------------

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <class T>
Tensor<T> sum_sq(const Tensor<T>& a) { return sum(mul(a, a)); }

template <class T>
Tensor<T> zeros_like(const Tensor<T>& a) { return Tensor<T>::zeros(a.shape()); }

}  // namespace leap

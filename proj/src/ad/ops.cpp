#include "ecglab/ad/ops.hpp"

#include <algorithm>
#include <cmath>

#include "ecglab/error.hpp"

namespace ecglab::ad {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                  std::function<void(Node<T>&)> bw) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  n->is_leaf = false;
  const bool rg = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Tensor<T>(std::move(n));
}

std::string shapes(const Shape& a, const Shape& b) { return to_string(a) + " and " + to_string(b); }

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
Shape broadcast_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": incompatible shapes " + shapes(a.shape(), b.shape()));
}

// Visits (out index, a index, b index) with the smaller operand repeated
// over the leading axes of the larger one.
template <typename Fn>
void for_each_pair(std::size_t n, std::size_t na, std::size_t nb, Fn fn) {
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
  } else if (na == n) {
    for (std::size_t o = 0; o < n; o += nb)
      for (std::size_t j = 0; j < nb; ++j) fn(o + j, o + j, j);
  } else {
    for (std::size_t o = 0; o < n; o += na)
      for (std::size_t j = 0; j < na; ++j) fn(o + j, j, o + j);
  }
}

template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
  Shape shape = broadcast_shape(op, a, b);
  const std::size_t n = numel(shape);
  const T* av = a.node()->value.data();
  const T* bv = b.node()->value.data();
  std::vector<T> out(n);
  for_each_pair(n, a.numel(), b.numel(), [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(av[ia], bv[ib]); });
  return make_op<T>(op, std::move(shape), std::move(out), {a.ptr(), b.ptr()}, [da, db](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const T* g = self.grad.data();
    const T* x = pa.value.data();
    const T* y = pb.value.data();
    const std::size_t n = self.value.size();
    if (pa.requires_grad) {
      T* ga = pa.ensure_grad().data();
      for_each_pair(n, pa.value.size(), pb.value.size(),
                    [&](std::size_t i, std::size_t ia, std::size_t ib) { ga[ia] += g[i] * da(x[ia], y[ib]); });
    }
    if (pb.requires_grad) {
      T* gb = pb.ensure_grad().data();
      for_each_pair(n, pa.value.size(), pb.value.size(),
                    [&](std::size_t i, std::size_t ia, std::size_t ib) { gb[ib] += g[i] * db(x[ia], y[ib]); });
    }
  });
}

// dy/dx expressed through x and y.
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, D d) {
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_op<T>(op, x.shape(), std::move(out), {x.ptr()}, [d](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * d(p.value[i], self.value[i]);
  });
}

// C(n x m) += A(n x k) B(k x m), i-k-j order.
template <typename T>
void gemm_nn(const T* __restrict A, const T* __restrict B, T* __restrict C, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* c = C + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T a = A[i * k + kk];
      if (a == T{0}) continue;
      const T* b = B + kk * m;
      for (std::size_t j = 0; j < m; ++j) c[j] += a * b[j];
    }
  }
}

// C(k x m) += A(n x k)^T G(n x m)
template <typename T>
void gemm_tn(const T* __restrict A, const T* __restrict G, T* __restrict C, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* g = G + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T a = A[i * k + kk];
      if (a == T{0}) continue;
      T* c = C + kk * m;
      for (std::size_t j = 0; j < m; ++j) c[j] += a * g[j];
    }
  }
}

// C(n x k) += G(n x m) B(k x m)^T
template <typename T>
void gemm_nt(const T* G, const T* B, T* C, std::size_t n, std::size_t k, std::size_t m) {
  std::vector<T> bt(m * k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < m; ++c) bt[c * k + r] = B[r * m + c];
  gemm_nn(G, bt.data(), C, n, m, k);
}

struct Axes {
  std::size_t outer = 1, len = 1, inner = 1;
};

Axes split(const Shape& s, std::size_t axis) {
  Axes a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

template <typename T>
void require_rows(const char* op, const Tensor<T>& x) {
  if (x.ndim() < 1 || x.shape().back() == 0) throw ShapeError(std::string(op) + ": needs a non-empty last axis, got " + to_string(x.shape()));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>("scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary<T>("add_scalar", x, [offset](T v) { return v + offset; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() < 2 || b.ndim() < 2) throw ShapeError("matmul: operands must be at least 2-D, got " + shapes(a.shape(), b.shape()));
  const std::size_t n = a.shape()[a.ndim() - 2], k = a.shape().back();
  const std::size_t kb = b.shape()[b.ndim() - 2], m = b.shape().back();
  const bool shared = b.ndim() == 2;
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  if (kb != k || (!shared && Shape(b.shape().begin(), b.shape().end() - 2) != batch_a)) {
    throw ShapeError("matmul: incompatible shapes " + shapes(a.shape(), b.shape()));
  }
  const std::size_t batch = numel(batch_a);
  Shape shape = batch_a;
  shape.push_back(n);
  shape.push_back(m);
  std::vector<T> out(batch * n * m, T{0});
  const T* av = a.node()->value.data();
  const T* bv = b.node()->value.data();
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(av + s * n * k, bv + (shared ? 0 : s * k * m), out.data() + s * n * m, n, k, m);
  }
  return make_op<T>("matmul", std::move(shape), std::move(out), {a.ptr(), b.ptr()},
                    [batch, n, k, m, shared](Node<T>& self) {
                      Node<T>& pa = *self.parents[0];
                      Node<T>& pb = *self.parents[1];
                      const T* g = self.grad.data();
                      if (pa.requires_grad) {
                        T* ga = pa.ensure_grad().data();
                        for (std::size_t s = 0; s < batch; ++s)
                          gemm_nt(g + s * n * m, pb.value.data() + (shared ? 0 : s * k * m), ga + s * n * k, n, k, m);
                      }
                      if (pb.requires_grad) {
                        T* gb = pb.ensure_grad().data();
                        for (std::size_t s = 0; s < batch; ++s)
                          gemm_tn(pa.value.data() + s * n * k, g + s * n * m, gb + (shared ? 0 : s * k * m), n, k, m);
                      }
                    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.ndim() < 2) throw ShapeError("transpose: needs at least 2-D, got " + to_string(x.shape()));
  const std::size_t r = x.shape()[x.ndim() - 2], c = x.shape().back();
  const std::size_t batch = x.numel() / std::max<std::size_t>(1, r * c);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 2], shape.back());
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[s * r * c + j * r + i] = xv[s * r * c + i * c + j];
  return make_op<T>("transpose", std::move(shape), std::move(out), {x.ptr()}, [batch, r, c](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[s * r * c + i * c + j] += self.grad[s * r * c + j * r + i];
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>("tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!(v > T{0})) throw DomainError("log: input must be > 0, got " + std::to_string(v));
  }
  return unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!(v >= T{0})) throw DomainError("sqrt: input must be >= 0, got " + std::to_string(v));
  }
  return unary<T>("sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T{1} / (T{2} * y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>("relu", x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>("abs", x, [](T v) { return std::abs(v); },
                  [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
  return unary<T>("clamp_min", x, [floor](T v) { return v < floor ? floor : v; },
                  [floor](T v, T) { return v < floor ? T{0} : T{1}; });
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.ndim()) throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  const Axes ax = split(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  const auto& xv = x.node()->value;
  std::vector<T> out(ax.outer * ax.inner, T{0});
  for (std::size_t o = 0; o < ax.outer; ++o)
    for (std::size_t l = 0; l < ax.len; ++l)
      for (std::size_t i = 0; i < ax.inner; ++i) out[o * ax.inner + i] += xv[(o * ax.len + l) * ax.inner + i];
  return make_op<T>("sum_axis", std::move(shape), std::move(out), {x.ptr()}, [ax](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < ax.outer; ++o)
      for (std::size_t l = 0; l < ax.len; ++l)
        for (std::size_t i = 0; i < ax.inner; ++i) g[(o * ax.len + l) * ax.inner + i] += self.grad[o * ax.inner + i];
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.ndim()) throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  return scale(sum_axis(x, axis), T{1} / static_cast<T>(x.shape()[axis]));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T s{0};
  for (T v : x.data()) s += v;
  return make_op<T>("sum_all", {1}, {s}, {x.ptr()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = first;
    if (a.size() != b.size()) throw ShapeError("concat: incompatible shapes " + shapes(first, p.shape()));
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat: incompatible shapes " + shapes(first, p.shape()));
    lens.push_back(p.shape()[axis]);
    shape[axis] += p.shape()[axis];
  }
  const Axes out_ax = split(shape, axis);
  std::vector<T> out(numel(shape));
  std::vector<NodePtr<T>> parents;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].node()->value;
    const std::size_t chunk = lens[k] * out_ax.inner;
    for (std::size_t o = 0; o < out_ax.outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_ax.len * out_ax.inner + offset * out_ax.inner));
    offset += lens[k];
    parents.push_back(parts[k].ptr());
  }
  return make_op<T>("concat", std::move(shape), std::move(out), std::move(parents), [out_ax, lens](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      Node<T>& p = *self.parents[k];
      const std::size_t chunk = lens[k] * out_ax.inner;
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t o = 0; o < out_ax.outer; ++o) {
          const T* src = self.grad.data() + o * out_ax.len * out_ax.inner + offset * out_ax.inner;
          T* dst = g.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += lens[k];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.ndim() || start + length > x.shape()[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " out of range for " + to_string(x.shape()));
  }
  const Axes ax = split(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  const std::size_t chunk = length * ax.inner;
  const auto& xv = x.node()->value;
  std::vector<T> out(ax.outer * chunk);
  for (std::size_t o = 0; o < ax.outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * ax.len + start) * ax.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  return make_op<T>("slice", std::move(shape), std::move(out), {x.ptr()}, [ax, start, chunk](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < ax.outer; ++o) {
      T* dst = g.data() + (o * ax.len + start) * ax.inner;
      const T* src = self.grad.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  return make_op<T>("reshape", std::move(shape), x.node()->value, {x.ptr()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
  require_rows("l2_normalize_rows", x);
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ss{0};
    for (std::size_t j = 0; j < d; ++j) ss += xv[r * d + j] * xv[r * d + j];
    if (!(ss > T{0})) throw DomainError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] / norms[r];
  }
  return make_op<T>("l2_normalize_rows", x.shape(), std::move(out), {x.ptr()}, [d, rows, norms](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* gy = self.grad.data() + r * d;
      T dot{0};
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += (gy[j] - y[j] * dot) / norms[r];
    }
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rows("softmax_rows", x);
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * d;
    T* y = out.data() + r * d;
    const T mx = *std::max_element(in, in + d);
    T s{0};
    for (std::size_t j = 0; j < d; ++j) s += (y[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) y[j] /= s;
  }
  return make_op<T>("softmax_rows", x.shape(), std::move(out), {x.ptr()}, [d, rows](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* gy = self.grad.data() + r * d;
      T dot{0};
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  require_rows("log_softmax_rows", x);
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * d;
    const T mx = *std::max_element(in, in + d);
    T s{0};
    for (std::size_t j = 0; j < d; ++j) s += std::exp(in[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] - lse;
  }
  return make_op<T>("log_softmax_rows", x.shape(), std::move(out), {x.ptr()}, [d, rows](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* gy = self.grad.data() + r * d;
      T s{0};
      for (std::size_t j = 0; j < d; ++j) s += gy[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += gy[j] - std::exp(y[j]) * s;
    }
  });
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, T eps) {
  require_rows("layer_norm_rows", x);
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  std::vector<T> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    inv[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (in[j] - mu) * inv[r];
  }
  return make_op<T>("layer_norm_rows", x.shape(), std::move(out), {x.ptr()}, [d, rows, inv](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* gy = self.grad.data() + r * d;
      T mg{0}, mgy{0};
      for (std::size_t j = 0; j < d; ++j) {
        mg += gy[j];
        mgy += gy[j] * y[j];
      }
      mg /= static_cast<T>(d);
      mgy /= static_cast<T>(d);
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += inv[r] * (gy[j] - mg - y[j] * mgy);
    }
  });
}

template <typename T>
Tensor<T> det3(const Tensor<T>& m) {
  if (m.ndim() < 2 || m.shape()[m.ndim() - 2] != 3 || m.shape().back() != 3) {
    throw ShapeError("det3: expected (..., 3, 3), got " + to_string(m.shape()));
  }
  Shape shape(m.shape().begin(), m.shape().end() - 2);
  if (shape.empty()) shape = {1};
  const std::size_t batch = m.numel() / 9;
  const auto& mv = m.node()->value;
  std::vector<T> out(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    const T* a = mv.data() + 9 * s;
    out[s] = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6]);
  }
  return make_op<T>("det3", std::move(shape), std::move(out), {m.ptr()}, [batch](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t s = 0; s < batch; ++s) {
      const T* a = p.value.data() + 9 * s;
      const T gs = self.grad[s];
      T* o = g.data() + 9 * s;
      o[0] += gs * (a[4] * a[8] - a[5] * a[7]);
      o[1] -= gs * (a[3] * a[8] - a[5] * a[6]);
      o[2] += gs * (a[3] * a[7] - a[4] * a[6]);
      o[3] -= gs * (a[1] * a[8] - a[2] * a[7]);
      o[4] += gs * (a[0] * a[8] - a[2] * a[6]);
      o[5] -= gs * (a[0] * a[7] - a[1] * a[6]);
      o[6] += gs * (a[1] * a[5] - a[2] * a[4]);
      o[7] -= gs * (a[0] * a[5] - a[2] * a[3]);
      o[8] += gs * (a[0] * a[4] - a[1] * a[3]);
    }
  });
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.ndim() < 2 || q.shape() != k.shape() || k.ndim() != v.ndim() ||
      !std::equal(k.shape().begin(), k.shape().end() - 1, v.shape().begin())) {
    throw ShapeError("scaled_dot_attention: incompatible shapes " + shapes(q.shape(), k.shape()) + " and " + to_string(v.shape()));
  }
  const T s = T{1} / std::sqrt(static_cast<T>(q.shape().back()));
  return matmul(softmax_rows(scale(matmul(q, transpose(k)), s)), v);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::uint32_t>& ids) {
  if (table.ndim() != 2) throw ShapeError("gather_rows: table must be 2-D, got " + to_string(table.shape()));
  const std::size_t V = table.shape()[0], d = table.shape()[1];
  const auto& tv = table.node()->value;
  std::vector<T> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= V) throw ShapeError("gather_rows: id " + std::to_string(ids[r]) + " outside table of " + std::to_string(V) + " rows");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return make_op<T>("gather_rows", {ids.size(), d}, std::move(out), {table.ptr()}, [ids, d](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g[ids[r] * d + j] += self.grad[r * d + j];
  });
}

#define ECGLAB_INSTANTIATE(T)                                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                       \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> transpose(const Tensor<T>&);                                                      \
  template Tensor<T> tanh(const Tensor<T>&);                                                           \
  template Tensor<T> exp(const Tensor<T>&);                                                            \
  template Tensor<T> log(const Tensor<T>&);                                                            \
  template Tensor<T> sqrt(const Tensor<T>&);                                                           \
  template Tensor<T> relu(const Tensor<T>&);                                                           \
  template Tensor<T> abs(const Tensor<T>&);                                                            \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                                   \
  template Tensor<T> sum_axis(const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                                         \
  template Tensor<T> sum_all(const Tensor<T>&);                                                        \
  template Tensor<T> mean_all(const Tensor<T>&);                                                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                               \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                 \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&);                                              \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                   \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                                               \
  template Tensor<T> layer_norm_rows(const Tensor<T>&, T);                                             \
  template Tensor<T> det3(const Tensor<T>&);                                                           \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::uint32_t>&);

ECGLAB_INSTANTIATE(float)
ECGLAB_INSTANTIATE(double)

#undef ECGLAB_INSTANTIATE

}  // namespace ecglab::ad

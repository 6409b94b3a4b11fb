#pragma once

#include <cstdint>
#include <vector>

#include "ecglab/ad/tensor.hpp"

namespace ecglab::ad {

// Elementwise binary ops broadcast a one-element operand, or an operand whose
// shape is a trailing suffix of the other's (broadcast over leading axes).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T offset);

/// (..., n, k) x (k, m) or (..., n, k) x (..., k, m) with equal batch axes.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
/// Throws DomainError for any input <= 0.
template <typename T> Tensor<T> log(const Tensor<T>& x);
/// Throws DomainError for any input < 0; the gradient at 0 is +inf.
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
/// max(x, floor); zero gradient where the floor is active.
template <typename T> Tensor<T> clamp_min(const Tensor<T>& x, T floor);

template <typename T> Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);
/// Sum / mean of every element, as a shape-{1} tensor.
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Row-wise ops act on the last axis.
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& x);
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& x);
template <typename T> Tensor<T> layer_norm_rows(const Tensor<T>& x, T eps = T(1e-5));

/// Batched determinant of (..., 3, 3) by cofactor expansion; returns (...).
template <typename T> Tensor<T> det3(const Tensor<T>& m);

/// softmax(q k^T / sqrt(d)) v over (..., n, d) operands.
template <typename T> Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

/// Rows of a (V, d) table selected by ids -> (ids.size(), d).
template <typename T> Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::uint32_t>& ids);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace ecglab::ad

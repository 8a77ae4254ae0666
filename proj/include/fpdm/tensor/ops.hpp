#pragma once

#include <memory>
#include <vector>

#include "fpdm/tensor/tape.hpp"

// Differentiable primitives. Each one evaluates eagerly; if any input lives on
// a tape the application is recorded there, otherwise nothing is recorded.
// All outputs are checked for NaN/Inf and raise NumericError naming the
// primitive.
namespace fpdm::ops {

// Element-wise with right-aligned broadcasting (extents equal or 1).
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> scale(const Var<T>& a, double c);
template <typename T> Var<T> add_scalar(const Var<T>& a, double c);

// a[..., K] @ w[K, N] -> [..., N]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& w);
// a[B, M, K] @ b[B, K, N], or b[B, N, K] transposed when transpose_b.
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> permute(const Var<T>& a, std::vector<std::size_t> axes);
// a[..., begin:begin+len]
template <typename T> Var<T> slice_last(const Var<T>& a, std::size_t begin, std::size_t len);

// tanh approximation
template <typename T> Var<T> gelu(const Var<T>& a);
template <typename T> Var<T> silu(const Var<T>& a);

// Normalizes over the last axis, no affine part.
template <typename T> Var<T> layer_norm(const Var<T>& a, double eps = 1e-6);
// Max-subtracted softmax over the last axis.
template <typename T> Var<T> softmax(const Var<T>& a);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);

// table[R, W] rows picked by index -> [len(index), W]
template <typename T> Var<T> gather_rows(const Var<T>& table, const std::vector<std::size_t>& index);

template <typename T> Var<T> custom(const Var<T>& a, std::shared_ptr<const CustomOp<T>> op);

// Composites built from the primitives above.

// layer_norm(x) * gain + bias
template <typename T> Var<T> layer_norm_affine(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                                               double eps = 1e-6);
// x @ w + b
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// Multi-head scaled dot-product attention on q, k, v of shape [B, L, W].
template <typename T> Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads);

}  // namespace fpdm::ops

#include "fpdm/tensor/ops.hpp"

#include <cmath>

#include "kernels.hpp"

namespace fpdm::ops {
namespace {

template <typename T>
Var<T> apply(OpKind op, OpAttrs<T> attrs, std::vector<const Var<T>*> inputs) {
  std::vector<const Tensor<T>*> values;
  values.reserve(inputs.size());
  Tape<T>* tape = nullptr;
  for (const Var<T>* in : inputs) {
    if (!in->valid()) throw UsageError(std::string(op_name(op)) + ": input has no value");
    values.push_back(&in->value());
    if (in->on_tape()) {
      if (tape && tape != in->tape()) {
        throw UsageError(std::string(op_name(op)) + ": inputs come from different tapes");
      }
      tape = in->tape();
    }
  }
  std::vector<Tensor<T>> saved;
  auto out = std::make_shared<const Tensor<T>>(detail::forward_kernel(op, attrs, values, saved));
  if (!out->all_finite()) {
    const std::string name = op == OpKind::kCustom ? attrs.custom->name : std::string(op_name(op));
    throw NumericError("numeric overflow: non-finite output from primitive '" + name + "'");
  }
  if (!tape) return Var<T>::constant(std::move(out));
  return tape->record(op, std::move(attrs), inputs, std::move(out), std::move(saved));
}

template <typename T>
Var<T> apply_scalar(OpKind op, const Var<T>& a, double c) {
  OpAttrs<T> attrs;
  attrs.scalar = c;
  return apply<T>(op, std::move(attrs), {&a});
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return apply<T>(OpKind::kAdd, {}, {&a, &b});
}
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return apply<T>(OpKind::kSub, {}, {&a, &b});
}
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return apply<T>(OpKind::kMul, {}, {&a, &b});
}
template <typename T>
Var<T> scale(const Var<T>& a, double c) {
  return apply_scalar(OpKind::kScale, a, c);
}
template <typename T>
Var<T> add_scalar(const Var<T>& a, double c) {
  return apply_scalar(OpKind::kAddScalar, a, c);
}
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& w) {
  return apply<T>(OpKind::kMatMul, {}, {&a, &w});
}
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  OpAttrs<T> attrs;
  attrs.flag = transpose_b;
  return apply<T>(OpKind::kBatchMatMul, std::move(attrs), {&a, &b});
}
template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  OpAttrs<T> attrs;
  attrs.ints.assign(shape.begin(), shape.end());
  return apply<T>(OpKind::kReshape, std::move(attrs), {&a});
}
template <typename T>
Var<T> permute(const Var<T>& a, std::vector<std::size_t> axes) {
  if (axes.size() != a.shape().size()) throw UsageError("permute: axes rank mismatch");
  std::vector<bool> seen(axes.size(), false);
  for (std::size_t ax : axes) {
    if (ax >= axes.size() || seen[ax]) throw UsageError("permute: axes are not a permutation");
    seen[ax] = true;
  }
  OpAttrs<T> attrs;
  attrs.ints = std::move(axes);
  return apply<T>(OpKind::kPermute, std::move(attrs), {&a});
}
template <typename T>
Var<T> slice_last(const Var<T>& a, std::size_t begin, std::size_t len) {
  OpAttrs<T> attrs;
  attrs.ints = {begin, len};
  return apply<T>(OpKind::kSliceLast, std::move(attrs), {&a});
}
template <typename T>
Var<T> gelu(const Var<T>& a) {
  return apply<T>(OpKind::kGelu, {}, {&a});
}
template <typename T>
Var<T> silu(const Var<T>& a) {
  return apply<T>(OpKind::kSilu, {}, {&a});
}
template <typename T>
Var<T> layer_norm(const Var<T>& a, double eps) {
  return apply_scalar(OpKind::kLayerNorm, a, eps);
}
template <typename T>
Var<T> softmax(const Var<T>& a) {
  return apply<T>(OpKind::kSoftmax, {}, {&a});
}
template <typename T>
Var<T> sum(const Var<T>& a) {
  return apply<T>(OpKind::kSum, {}, {&a});
}
template <typename T>
Var<T> mean(const Var<T>& a) {
  return apply<T>(OpKind::kMean, {}, {&a});
}
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  return apply<T>(OpKind::kMse, {}, {&a, &b});
}
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::size_t>& index) {
  if (index.empty()) throw UsageError("gather_rows: empty index");
  OpAttrs<T> attrs;
  attrs.ints = index;
  return apply<T>(OpKind::kGatherRows, std::move(attrs), {&table});
}
template <typename T>
Var<T> custom(const Var<T>& a, std::shared_ptr<const CustomOp<T>> op) {
  OpAttrs<T> attrs;
  attrs.custom = std::move(op);
  return apply<T>(OpKind::kCustom, std::move(attrs), {&a});
}

template <typename T>
Var<T> layer_norm_affine(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, double eps) {
  return add(mul(layer_norm(x, eps), gain), bias);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add(matmul(x, w), b);
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads) {
  const Shape& s = q.shape();
  if (s.size() != 3 || k.shape() != s || v.shape() != s) throw UsageError("attention: q, k, v must be [B, L, W]");
  const std::size_t batch = s[0], len = s[1], width = s[2];
  if (heads == 0 || width % heads != 0) throw UsageError("attention: width not divisible by heads");
  const std::size_t hd = width / heads;
  auto split = [&](const Var<T>& x) {
    return reshape(permute(reshape(x, {batch, len, heads, hd}), {0, 2, 1, 3}), {batch * heads, len, hd});
  };
  const Var<T> qh = split(q), kh = split(k), vh = split(v);
  const Var<T> scores = scale(bmm(qh, kh, true), 1.0 / std::sqrt(double(hd)));
  const Var<T> out = bmm(softmax(scores), vh);
  return reshape(permute(reshape(out, {batch, heads, len, hd}), {0, 2, 1, 3}), {batch, len, width});
}

#define FPDM_INSTANTIATE_OPS(T)                                                                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                \
  template Var<T> scale(const Var<T>&, double);                                                     \
  template Var<T> add_scalar(const Var<T>&, double);                                                \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                                          \
  template Var<T> reshape(const Var<T>&, Shape);                                                    \
  template Var<T> permute(const Var<T>&, std::vector<std::size_t>);                                 \
  template Var<T> slice_last(const Var<T>&, std::size_t, std::size_t);                              \
  template Var<T> gelu(const Var<T>&);                                                              \
  template Var<T> silu(const Var<T>&);                                                              \
  template Var<T> layer_norm(const Var<T>&, double);                                                \
  template Var<T> softmax(const Var<T>&);                                                           \
  template Var<T> sum(const Var<T>&);                                                               \
  template Var<T> mean(const Var<T>&);                                                              \
  template Var<T> mse(const Var<T>&, const Var<T>&);                                                \
  template Var<T> gather_rows(const Var<T>&, const std::vector<std::size_t>&);                      \
  template Var<T> custom(const Var<T>&, std::shared_ptr<const CustomOp<T>>);                        \
  template Var<T> layer_norm_affine(const Var<T>&, const Var<T>&, const Var<T>&, double);           \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                              \
  template Var<T> attention(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);

FPDM_INSTANTIATE_OPS(float)
FPDM_INSTANTIATE_OPS(double)

#undef FPDM_INSTANTIATE_OPS

}  // namespace fpdm::ops

#include "kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace fpdm::detail {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;
template <typename T>
using ArrC = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ArrM = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;

struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa;
  std::vector<std::size_t> sb;
};

std::vector<std::size_t> padded(const Shape& s, std::size_t n) {
  std::vector<std::size_t> p(n - s.size(), 1);
  p.insert(p.end(), s.begin(), s.end());
  return p;
}

std::vector<std::size_t> strides_for(const std::vector<std::size_t>& dims, const Shape& out) {
  std::vector<std::size_t> st(dims.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = dims.size(); i-- > 0;) {
    st[i] = (dims[i] == 1 && out[i] != 1) ? 0 : acc;
    acc *= dims[i];
  }
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  auto pa = padded(a, n);
  auto pb = padded(b, n);
  Broadcast p;
  p.out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      p.out[i] = pa[i];
    } else if (pa[i] == 1) {
      p.out[i] = pb[i];
    } else {
      throw UsageError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    }
  }
  p.sa = strides_for(pa, p.out);
  p.sb = strides_for(pb, p.out);
  return p;
}

// inner(out_offset, a_offset, b_offset, len, a_step, b_step) over contiguous
// runs of the last output axis.
template <typename F>
void broadcast_loop(const Broadcast& p, F&& inner) {
  const std::size_t n = p.out.size();
  const std::size_t len = p.out[n - 1];
  const std::size_t total = shape_numel(p.out);
  const std::size_t outer = total / len;
  std::vector<std::size_t> idx(n, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    inner(o * len, oa, ob, len, p.sa[n - 1], p.sb[n - 1]);
    for (std::size_t d = n - 1; d-- > 0;) {
      ++idx[d];
      oa += p.sa[d];
      ob += p.sb[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.sa[d] * p.out[d];
      ob -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// Sums grad (broadcast output shape) down to `target`, accumulating in double.
template <typename T>
Tensor<T> sum_to(const Tensor<T>& grad, const Shape& target, bool is_a, const Broadcast& p,
                 const std::type_identity_t<Tensor<T>>* factor_other) {
  if (target == grad.shape() && factor_other == nullptr) return grad;
  std::vector<double> acc(shape_numel(target), 0.0);
  const T* g = grad.raw();
  const T* f = factor_other ? factor_other->raw() : nullptr;
  broadcast_loop(p, [&](std::size_t o, std::size_t oa, std::size_t ob, std::size_t len, std::size_t as,
                        std::size_t bs) {
    const std::size_t mine = is_a ? oa : ob;
    const std::size_t mine_s = is_a ? as : bs;
    const std::size_t other = is_a ? ob : oa;
    const std::size_t other_s = is_a ? bs : as;
    for (std::size_t i = 0; i < len; ++i) {
      double v = double(g[o + i]);
      if (f) v *= double(f[other + i * other_s]);
      acc[mine + i * mine_s] += v;
    }
  });
  std::vector<T> out(acc.begin(), acc.end());
  return Tensor<T>(target, std::move(out));
}

template <typename T, typename F>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.raw();
    const T* pb = b.raw();
    T* po = out.raw();
    for (std::size_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Broadcast p = plan_broadcast(a.shape(), b.shape());
  Tensor<T> out(p.out);
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  broadcast_loop(p, [&](std::size_t o, std::size_t oa, std::size_t ob, std::size_t len, std::size_t as,
                        std::size_t bs) {
    for (std::size_t i = 0; i < len; ++i) po[o + i] = f(pa[oa + i * as], pb[ob + i * bs]);
  });
  return out;
}

template <typename T, typename F>
Tensor<T> unary(const Tensor<T>& a, F&& f) {
  Tensor<T> out(a.shape());
  const T* pa = a.raw();
  T* po = out.raw();
  for (std::size_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i]);
  return out;
}

std::size_t last_dim(const Shape& s) { return s.back(); }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;


void check_matmul(const Shape& a, const Shape& w) {
  if (w.size() != 2 || a.back() != w[0]) {
    throw UsageError("matmul: cannot multiply " + shape_str(a) + " by " + shape_str(w));
  }
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

template <typename T>
Tensor<T> permute_kernel(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  const std::size_t n = in.size();
  Shape out_shape(n);
  for (std::size_t i = 0; i < n; ++i) out_shape[i] = in[axes[i]];
  const auto in_st = row_major_strides(in);
  std::vector<std::size_t> st(n);
  for (std::size_t i = 0; i < n; ++i) st[i] = in_st[axes[i]];
  Tensor<T> out(out_shape);
  const T* src = a.raw();
  T* dst = out.raw();
  const std::size_t len = out_shape[n - 1];
  const std::size_t inner_s = st[n - 1];
  const std::size_t outer = out.numel() / len;
  std::vector<std::size_t> idx(n, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < len; ++i) dst[o * len + i] = src[off + i * inner_s];
    for (std::size_t d = n - 1; d-- > 0;) {
      ++idx[d];
      off += st[d];
      if (idx[d] < out_shape[d]) break;
      off -= st[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> forward_kernel(OpKind op, const OpAttrs<T>& attrs, const std::vector<const Tensor<T>*>& in,
                         std::vector<Tensor<T>>& saved) {
  switch (op) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      throw UsageError("leaf and constant nodes have no kernel");
    case OpKind::kAdd:
      return binary(*in[0], *in[1], [](T x, T y) { return x + y; });
    case OpKind::kSub:
      return binary(*in[0], *in[1], [](T x, T y) { return x - y; });
    case OpKind::kMul:
      return binary(*in[0], *in[1], [](T x, T y) { return x * y; });
    case OpKind::kScale: {
      const T c = T(attrs.scalar);
      return unary(*in[0], [c](T x) { return c * x; });
    }
    case OpKind::kAddScalar: {
      const T c = T(attrs.scalar);
      return unary(*in[0], [c](T x) { return x + c; });
    }
    case OpKind::kMatMul: {
      const Tensor<T>& a = *in[0];
      const Tensor<T>& w = *in[1];
      check_matmul(a.shape(), w.shape());
      const std::size_t k = w.dim(0);
      const std::size_t n = w.dim(1);
      const std::size_t rows = a.numel() / k;
      Shape os = a.shape();
      os.back() = n;
      Tensor<T> out(os);
      MapM<T>(out.raw(), rows, n).noalias() = MapC<T>(a.raw(), rows, k) * MapC<T>(w.raw(), k, n);
      return out;
    }
    case OpKind::kBatchMatMul: {
      const Tensor<T>& a = *in[0];
      const Tensor<T>& b = *in[1];
      const bool tb = attrs.flag;
      if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != (tb ? b.dim(2) : b.dim(1))) {
        throw UsageError("bmm: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
      }
      const std::size_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), n = tb ? b.dim(1) : b.dim(2);
      Tensor<T> out(Shape{bt, m, n});
      for (std::size_t i = 0; i < bt; ++i) {
        MapC<T> am(a.raw() + i * m * k, m, k);
        MapM<T> om(out.raw() + i * m * n, m, n);
        if (tb) {
          om.noalias() = am * MapC<T>(b.raw() + i * n * k, n, k).transpose();
        } else {
          om.noalias() = am * MapC<T>(b.raw() + i * k * n, k, n);
        }
      }
      return out;
    }
    case OpKind::kReshape:
      return in[0]->reshaped(Shape(attrs.ints.begin(), attrs.ints.end()));
    case OpKind::kPermute:
      return permute_kernel(*in[0], attrs.ints);
    case OpKind::kSliceLast: {
      const Tensor<T>& a = *in[0];
      const std::size_t begin = attrs.ints[0], len = attrs.ints[1], w = last_dim(a.shape());
      if (begin + len > w || len == 0) throw UsageError("slice_last out of range");
      Shape os = a.shape();
      os.back() = len;
      Tensor<T> out(os);
      const std::size_t rows = a.numel() / w;
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.raw() + r * w + begin, len, out.raw() + r * len);
      }
      return out;
    }
    case OpKind::kGelu: {
      const Tensor<T>& a = *in[0];
      Tensor<T> out(a.shape());
      const auto x = ArrC<T>(a.raw(), Eigen::Index(a.numel()));
      ArrM<T>(out.raw(), Eigen::Index(a.numel())) =
          T(0.5) * x * (T(1) + (T(kGeluC) * (x + T(kGeluA) * x.cube())).tanh());
      return out;
    }
    case OpKind::kSilu: {
      const Tensor<T>& a = *in[0];
      Tensor<T> out(a.shape());
      const auto x = ArrC<T>(a.raw(), Eigen::Index(a.numel()));
      ArrM<T>(out.raw(), Eigen::Index(a.numel())) = x / (T(1) + (-x).exp());
      return out;
    }
    case OpKind::kLayerNorm: {
      const Tensor<T>& a = *in[0];
      const std::size_t w = last_dim(a.shape());
      const std::size_t rows = a.numel() / w;
      Tensor<T> out(a.shape());
      Tensor<T> rstd(Shape{rows});
      for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.raw() + r * w;
        double mu = 0.0;
        for (std::size_t i = 0; i < w; ++i) mu += x[i];
        mu /= double(w);
        double var = 0.0;
        for (std::size_t i = 0; i < w; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= double(w);
        const double rs = 1.0 / std::sqrt(var + attrs.scalar);
        rstd[r] = T(rs);
        T* y = out.raw() + r * w;
        for (std::size_t i = 0; i < w; ++i) y[i] = T((x[i] - mu) * rs);
      }
      saved.push_back(std::move(rstd));
      return out;
    }
    case OpKind::kSoftmax: {
      const Tensor<T>& a = *in[0];
      const std::size_t w = last_dim(a.shape());
      const std::size_t rows = a.numel() / w;
      Tensor<T> out(a.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.raw() + r * w;
        T* y = out.raw() + r * w;
        const double mx = *std::max_element(x, x + w);
        double s = 0.0;
        for (std::size_t i = 0; i < w; ++i) s += std::exp(double(x[i]) - mx);
        for (std::size_t i = 0; i < w; ++i) y[i] = T(std::exp(double(x[i]) - mx) / s);
      }
      return out;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      double s = 0.0;
      for (T v : in[0]->data()) s += v;
      if (op == OpKind::kMean) s /= double(in[0]->numel());
      return Tensor<T>::scalar(T(s));
    }
    case OpKind::kMse: {
      const Tensor<T>& a = *in[0];
      const Tensor<T>& b = *in[1];
      if (a.shape() != b.shape()) {
        throw UsageError("mse: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
      }
      double s = 0.0;
      for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
      }
      return Tensor<T>::scalar(T(s / double(a.numel())));
    }
    case OpKind::kGatherRows: {
      const Tensor<T>& table = *in[0];
      if (table.rank() != 2) throw UsageError("gather_rows: table must be rank 2");
      const std::size_t w = table.dim(1);
      Tensor<T> out(Shape{attrs.ints.size(), w});
      for (std::size_t r = 0; r < attrs.ints.size(); ++r) {
        if (attrs.ints[r] >= table.dim(0)) throw UsageError("gather_rows: index out of range");
        std::copy_n(table.raw() + attrs.ints[r] * w, w, out.raw() + r * w);
      }
      return out;
    }
    case OpKind::kCustom:
      return attrs.custom->forward(*in[0]);
  }
  throw UsageError("unknown op");
}

template <typename T>
void backward_kernel(OpKind op, const OpAttrs<T>& attrs, const std::vector<const Tensor<T>*>& in,
                     const Tensor<T>& out, const std::vector<Tensor<T>>& saved, const Tensor<T>& grad,
                     std::vector<std::optional<Tensor<T>>>& grad_in) {
  grad_in.assign(in.size(), std::nullopt);
  switch (op) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return;
    case OpKind::kAdd:
    case OpKind::kSub: {
      const Broadcast p = plan_broadcast(in[0]->shape(), in[1]->shape());
      grad_in[0] = sum_to(grad, in[0]->shape(), true, p, nullptr);
      Tensor<T> gb = sum_to(grad, in[1]->shape(), false, p, nullptr);
      if (op == OpKind::kSub) {
        for (auto& v : gb.data()) v = -v;
      }
      grad_in[1] = std::move(gb);
      return;
    }
    case OpKind::kMul: {
      const Broadcast p = plan_broadcast(in[0]->shape(), in[1]->shape());
      grad_in[0] = sum_to(grad, in[0]->shape(), true, p, in[1]);
      grad_in[1] = sum_to(grad, in[1]->shape(), false, p, in[0]);
      return;
    }
    case OpKind::kScale: {
      const T c = T(attrs.scalar);
      grad_in[0] = unary(grad, [c](T g) { return c * g; });
      return;
    }
    case OpKind::kAddScalar:
    case OpKind::kReshape:
      grad_in[0] = grad.reshaped(in[0]->shape());
      return;
    case OpKind::kMatMul: {
      const Tensor<T>& a = *in[0];
      const Tensor<T>& w = *in[1];
      const std::size_t k = w.dim(0), n = w.dim(1), rows = a.numel() / k;
      Tensor<T> ga(a.shape());
      Tensor<T> gw(w.shape());
      MapC<T> g(grad.raw(), rows, n);
      MapM<T>(ga.raw(), rows, k).noalias() = g * MapC<T>(w.raw(), k, n).transpose();
      MapM<T>(gw.raw(), k, n).noalias() = MapC<T>(a.raw(), rows, k).transpose() * g;
      grad_in[0] = std::move(ga);
      grad_in[1] = std::move(gw);
      return;
    }
    case OpKind::kBatchMatMul: {
      const Tensor<T>& a = *in[0];
      const Tensor<T>& b = *in[1];
      const bool tb = attrs.flag;
      const std::size_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), n = tb ? b.dim(1) : b.dim(2);
      Tensor<T> ga(a.shape());
      Tensor<T> gb(b.shape());
      for (std::size_t i = 0; i < bt; ++i) {
        MapC<T> g(grad.raw() + i * m * n, m, n);
        MapC<T> am(a.raw() + i * m * k, m, k);
        if (tb) {
          MapC<T> bm(b.raw() + i * n * k, n, k);
          MapM<T>(ga.raw() + i * m * k, m, k).noalias() = g * bm;
          MapM<T>(gb.raw() + i * n * k, n, k).noalias() = g.transpose() * am;
        } else {
          MapC<T> bm(b.raw() + i * k * n, k, n);
          MapM<T>(ga.raw() + i * m * k, m, k).noalias() = g * bm.transpose();
          MapM<T>(gb.raw() + i * k * n, k, n).noalias() = am.transpose() * g;
        }
      }
      grad_in[0] = std::move(ga);
      grad_in[1] = std::move(gb);
      return;
    }
    case OpKind::kPermute: {
      std::vector<std::size_t> inv(attrs.ints.size());
      for (std::size_t i = 0; i < attrs.ints.size(); ++i) inv[attrs.ints[i]] = i;
      grad_in[0] = permute_kernel(grad, inv);
      return;
    }
    case OpKind::kSliceLast: {
      const Tensor<T>& a = *in[0];
      const std::size_t begin = attrs.ints[0], len = attrs.ints[1], w = last_dim(a.shape());
      Tensor<T> ga(a.shape());
      const std::size_t rows = a.numel() / w;
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(grad.raw() + r * len, len, ga.raw() + r * w + begin);
      }
      grad_in[0] = std::move(ga);
      return;
    }
    case OpKind::kGelu: {
      const Tensor<T>& a = *in[0];
      Tensor<T> ga(a.shape());
      const Eigen::Index n = Eigen::Index(a.numel());
      const auto x = ArrC<T>(a.raw(), n);
      const Eigen::Array<T, Eigen::Dynamic, 1> t = (T(kGeluC) * (x + T(kGeluA) * x.cube())).tanh();
      ArrM<T>(ga.raw(), n) = ArrC<T>(grad.raw(), n) *
                             (T(0.5) * (T(1) + t) +
                              T(0.5) * x * (T(1) - t.square()) * T(kGeluC) * (T(1) + T(3.0 * kGeluA) * x.square()));
      grad_in[0] = std::move(ga);
      return;
    }
    case OpKind::kSilu: {
      const Tensor<T>& a = *in[0];
      Tensor<T> ga(a.shape());
      const Eigen::Index n = Eigen::Index(a.numel());
      const auto x = ArrC<T>(a.raw(), n);
      const Eigen::Array<T, Eigen::Dynamic, 1> sg = T(1) / (T(1) + (-x).exp());
      ArrM<T>(ga.raw(), n) = ArrC<T>(grad.raw(), n) * sg * (T(1) + x * (T(1) - sg));
      grad_in[0] = std::move(ga);
      return;
    }
    case OpKind::kLayerNorm: {
      const std::size_t w = last_dim(out.shape());
      const std::size_t rows = out.numel() / w;
      const Tensor<T>& rstd = saved[0];
      Tensor<T> ga(out.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = out.raw() + r * w;
        const T* g = grad.raw() + r * w;
        double mg = 0.0, mgy = 0.0;
        for (std::size_t i = 0; i < w; ++i) {
          mg += g[i];
          mgy += double(g[i]) * double(y[i]);
        }
        mg /= double(w);
        mgy /= double(w);
        const double rs = rstd[r];
        T* gx = ga.raw() + r * w;
        for (std::size_t i = 0; i < w; ++i) gx[i] = T(rs * (double(g[i]) - mg - double(y[i]) * mgy));
      }
      grad_in[0] = std::move(ga);
      return;
    }
    case OpKind::kSoftmax: {
      const std::size_t w = last_dim(out.shape());
      const std::size_t rows = out.numel() / w;
      Tensor<T> ga(out.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = out.raw() + r * w;
        const T* g = grad.raw() + r * w;
        double dot = 0.0;
        for (std::size_t i = 0; i < w; ++i) dot += double(g[i]) * double(y[i]);
        T* gx = ga.raw() + r * w;
        for (std::size_t i = 0; i < w; ++i) gx[i] = T(double(y[i]) * (double(g[i]) - dot));
      }
      grad_in[0] = std::move(ga);
      return;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      double g = grad.item();
      if (op == OpKind::kMean) g /= double(in[0]->numel());
      grad_in[0] = Tensor<T>(in[0]->shape(), T(g));
      return;
    }
    case OpKind::kMse: {
      const Tensor<T>& a = *in[0];
      const Tensor<T>& b = *in[1];
      const double c = 2.0 * double(grad.item()) / double(a.numel());
      Tensor<T> ga(a.shape());
      Tensor<T> gb(a.shape());
      for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = c * (double(a[i]) - double(b[i]));
        ga[i] = T(d);
        gb[i] = T(-d);
      }
      grad_in[0] = std::move(ga);
      grad_in[1] = std::move(gb);
      return;
    }
    case OpKind::kGatherRows: {
      const Tensor<T>& table = *in[0];
      const std::size_t w = table.dim(1);
      std::vector<double> acc(table.numel(), 0.0);
      for (std::size_t r = 0; r < attrs.ints.size(); ++r) {
        for (std::size_t i = 0; i < w; ++i) acc[attrs.ints[r] * w + i] += grad[r * w + i];
      }
      grad_in[0] = Tensor<T>(table.shape(), std::vector<T>(acc.begin(), acc.end()));
      return;
    }
    case OpKind::kCustom:
      grad_in[0] = attrs.custom->vjp(*in[0], out, grad);
      return;
  }
}

template Tensor<float> forward_kernel(OpKind, const OpAttrs<float>&, const std::vector<const Tensor<float>*>&,
                                      std::vector<Tensor<float>>&);
template Tensor<double> forward_kernel(OpKind, const OpAttrs<double>&, const std::vector<const Tensor<double>*>&,
                                       std::vector<Tensor<double>>&);
template void backward_kernel(OpKind, const OpAttrs<float>&, const std::vector<const Tensor<float>*>&,
                              const Tensor<float>&, const std::vector<Tensor<float>>&, const Tensor<float>&,
                              std::vector<std::optional<Tensor<float>>>&);
template void backward_kernel(OpKind, const OpAttrs<double>&, const std::vector<const Tensor<double>*>&,
                              const Tensor<double>&, const std::vector<Tensor<double>>&, const Tensor<double>&,
                              std::vector<std::optional<Tensor<double>>>&);

}  // namespace fpdm::detail

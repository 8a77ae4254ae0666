#include "fpdm/net/blocks.hpp"

#include <cmath>

namespace fpdm::net {
namespace o = fpdm::ops;

template <typename T>
void add_linear(ParamStore<T>& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                Init weight, bool bias) {
  Tensor<T> w({in, out});
  switch (weight) {
    case Init::kXavier: {
      const double a = std::sqrt(6.0 / double(in + out));
      w = rand_uniform<T>({in, out}, rng, -a, a);
      break;
    }
    case Init::kNormal002:
      w = randn<T>({in, out}, rng, 0.02);
      break;
    case Init::kIdentity:
      if (in != out) throw UsageError("identity init needs a square weight: " + prefix);
      for (std::size_t i = 0; i < in; ++i) w[i * out + i] = T(1);
      break;
    case Init::kOnes:
      w = Tensor<T>({in, out}, T(1));
      break;
    case Init::kZero:
      break;
  }
  ps.add(prefix + ".w", std::move(w));
  if (bias) ps.add(prefix + ".b", Tensor<T>({out}));
}

template <typename T>
Var<T> lin(const Context<T>& ctx, const std::string& prefix, const Var<T>& x) {
  return o::linear(x, ctx.param(prefix + ".w"), ctx.param(prefix + ".b"));
}

template <typename T>
Var<T> self_attention(const Context<T>& ctx, const std::string& prefix, const Var<T>& h, const NetworkConfig& cfg) {
  const std::size_t w = cfg.width;
  const Var<T> qkv = lin(ctx, prefix + ".qkv", h);
  const Var<T> a =
      o::attention(o::slice_last(qkv, 0, w), o::slice_last(qkv, w, w), o::slice_last(qkv, 2 * w, w), cfg.heads);
  return lin(ctx, prefix + ".proj", a);
}

template <typename T>
Var<T> mlp(const Context<T>& ctx, const std::string& prefix, const Var<T>& h) {
  return lin(ctx, prefix + ".fc2", o::gelu(lin(ctx, prefix + ".fc1", h)));
}

template <typename T>
void add_attention_mlp(ParamStore<T>& ps, const std::string& prefix, const NetworkConfig& cfg, Rng& rng) {
  const std::size_t w = cfg.width;
  add_linear(ps, prefix + ".attn.qkv", w, 3 * w, rng);
  add_linear(ps, prefix + ".attn.proj", w, w, rng);
  add_linear(ps, prefix + ".mlp.fc1", w, cfg.mlp_ratio * w, rng);
  add_linear(ps, prefix + ".mlp.fc2", cfg.mlp_ratio * w, w, rng);
}

template <typename T>
void add_plain_block(ParamStore<T>& ps, const std::string& prefix, const NetworkConfig& cfg, Rng& rng) {
  const std::size_t w = cfg.width;
  ps.add(prefix + ".ln1.g", Tensor<T>({w}, T(1)));
  ps.add(prefix + ".ln1.b", Tensor<T>({w}));
  ps.add(prefix + ".ln2.g", Tensor<T>({w}, T(1)));
  ps.add(prefix + ".ln2.b", Tensor<T>({w}));
  add_attention_mlp(ps, prefix, cfg, rng);
  ps.add(prefix + ".gate1", Tensor<T>({w}));
  ps.add(prefix + ".gate2", Tensor<T>({w}));
}

template <typename T>
Var<T> plain_block(const Context<T>& ctx, const std::string& prefix, const Var<T>& x, const NetworkConfig& cfg) {
  ++ctx.counters().block_passes;
  const Var<T> h1 = o::layer_norm_affine(x, ctx.param(prefix + ".ln1.g"), ctx.param(prefix + ".ln1.b"));
  const Var<T> x1 = o::add(x, o::mul(ctx.param(prefix + ".gate1"), self_attention(ctx, prefix + ".attn", h1, cfg)));
  const Var<T> h2 = o::layer_norm_affine(x1, ctx.param(prefix + ".ln2.g"), ctx.param(prefix + ".ln2.b"));
  return o::add(x1, o::mul(ctx.param(prefix + ".gate2"), mlp(ctx, prefix + ".mlp", h2)));
}

template <typename T>
void add_cond_block(ParamStore<T>& ps, const std::string& prefix, const NetworkConfig& cfg, Rng& rng) {
  add_attention_mlp(ps, prefix, cfg, rng);
  add_linear(ps, prefix + ".ada", cfg.width, 6 * cfg.width, rng, Init::kZero);
}

template <typename T>
Modulation<T> modulation(const Context<T>& ctx, const std::string& prefix, const Var<T>& c) {
  const Shape& s = c.shape();
  if (s.size() != 2) throw UsageError("modulation: conditioning must be [B, W]");
  const std::size_t b = s[0], w = s[1];
  const Var<T> m = lin(ctx, prefix + ".ada", o::silu(c));
  auto part = [&](std::size_t i) { return o::reshape(o::slice_last(m, i * w, w), {b, 1, w}); };
  return {part(0), part(1), part(2), part(3), part(4), part(5)};
}

template <typename T>
Var<T> modulate(const Var<T>& x, const Var<T>& shift, const Var<T>& scale) {
  return o::add(o::mul(o::layer_norm(x), o::add_scalar(scale, 1.0)), shift);
}

template <typename T>
Var<T> cond_block(const Context<T>& ctx, const std::string& prefix, const Var<T>& x, const Modulation<T>& mod,
                  const NetworkConfig& cfg, const Var<T>* skip) {
  ++ctx.counters().block_passes;
  const Var<T> h1 = modulate(x, mod.shift1, mod.scale1);
  const Var<T> x1 = o::add(skip ? *skip : x, o::mul(mod.gate1, self_attention(ctx, prefix + ".attn", h1, cfg)));
  const Var<T> h2 = modulate(x1, mod.shift2, mod.scale2);
  return o::add(x1, o::mul(mod.gate2, mlp(ctx, prefix + ".mlp", h2)));
}

#define FPDM_INSTANTIATE_BLOCKS(T)                                                                          \
  template void add_linear(ParamStore<T>&, const std::string&, std::size_t, std::size_t, Rng&, Init, bool); \
  template void add_plain_block(ParamStore<T>&, const std::string&, const NetworkConfig&, Rng&);            \
  template Var<T> plain_block(const Context<T>&, const std::string&, const Var<T>&, const NetworkConfig&);  \
  template void add_cond_block(ParamStore<T>&, const std::string&, const NetworkConfig&, Rng&);             \
  template Modulation<T> modulation(const Context<T>&, const std::string&, const Var<T>&);                  \
  template Var<T> cond_block(const Context<T>&, const std::string&, const Var<T>&, const Modulation<T>&,    \
                             const NetworkConfig&, const Var<T>*);

FPDM_INSTANTIATE_BLOCKS(float)
FPDM_INSTANTIATE_BLOCKS(double)

#undef FPDM_INSTANTIATE_BLOCKS

}  // namespace fpdm::net

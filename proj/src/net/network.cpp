#include "fpdm/net/network.hpp"

#include <cmath>

namespace fpdm::net {
namespace o = fpdm::ops;

template <typename T>
Tensor<T> timestep_features(const std::vector<int>& t, std::size_t freq_dim) {
  if (t.empty()) throw UsageError("timestep_features: empty batch");
  const std::size_t half = freq_dim / 2;
  Tensor<T> out({t.size(), freq_dim});
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
      const double arg = double(t[b]) * freq;
      out[b * freq_dim + i] = T(std::cos(arg));
      out[b * freq_dim + half + i] = T(std::sin(arg));
    }
  }
  return out;
}

template <typename T>
Tensor<T> position_table(std::size_t tokens, std::size_t width) {
  const std::size_t half = width / 2;
  Tensor<T> out({tokens, width});
  for (std::size_t p = 0; p < tokens; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double arg = double(p) * std::exp(-std::log(10000.0) * double(i) / double(half));
      out[p * width + i] = T(std::sin(arg));
      out[p * width + half + i] = T(std::cos(arg));
    }
  }
  return out;
}

template <typename T>
Var<T> patchify(const Var<T>& x, const NetworkConfig& cfg) {
  const std::size_t b = x.shape()[0];
  if (cfg.input == InputKind::kPoints) {
    if (x.shape() != Shape{b, cfg.point_dim}) throw UsageError("expected points [B, " + std::to_string(cfg.point_dim) + "], got " + shape_str(x.shape()));
    return o::reshape(x, {b, 1, cfg.point_dim});
  }
  const std::size_t s = cfg.image_size, p = cfg.patch, g = s / p;
  if (x.shape() != Shape{b, s, s}) throw UsageError("expected images [B, " + std::to_string(s) + ", " + std::to_string(s) + "], got " + shape_str(x.shape()));
  return o::reshape(o::permute(o::reshape(x, {b, g, p, g, p}), {0, 1, 3, 2, 4}), {b, g * g, p * p});
}

template <typename T>
Var<T> unpatchify(const Var<T>& tokens, const NetworkConfig& cfg) {
  const std::size_t b = tokens.shape()[0];
  if (tokens.shape() != Shape{b, cfg.token_count(), cfg.token_dim()}) {
    throw UsageError("unpatchify: unexpected token shape " + shape_str(tokens.shape()));
  }
  if (cfg.input == InputKind::kPoints) return o::reshape(tokens, {b, cfg.point_dim});
  const std::size_t s = cfg.image_size, p = cfg.patch, g = s / p;
  return o::reshape(o::permute(o::reshape(tokens, {b, g, g, p, p}), {0, 1, 3, 2, 4}), {b, s, s});
}

template <typename T>
Network<T>::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

template <typename T>
void Network<T>::add_shared_params(ParamStore<T>& ps, Rng& rng) const {
  const std::size_t w = cfg_.width;
  add_linear(ps, "embed", cfg_.token_dim(), w, rng);
  add_linear(ps, "t_embed.fc1", cfg_.freq_dim, w, rng, Init::kNormal002);
  add_linear(ps, "t_embed.fc2", w, w, rng, Init::kNormal002);
  // Zero rows: a label that never reaches training stays equivalent to every other.
  ps.add("class_table", Tensor<T>({cfg_.n_classes + 1, w}));
  if (cfg_.final_norm) {
    ps.add("final.ln.g", Tensor<T>({w}, T(1)));
    ps.add("final.ln.b", Tensor<T>({w}));
  }
  add_linear(ps, "final", w, cfg_.token_dim(), rng, Init::kZero);
}

template <typename T>
ParamStore<T> Network<T>::init(std::uint64_t seed) const {
  Rng rng(seed);
  ParamStore<T> ps;
  add_shared_params(ps, rng);
  for (std::size_t i = 0; i < cfg_.n_pre; ++i) add_plain_block(ps, pre_name(i), cfg_, rng);
  add_cond_block(ps, kBlock, cfg_, rng);
  add_linear(ps, kInject, cfg_.width, cfg_.width, rng);
  for (std::size_t i = 0; i < cfg_.n_post; ++i) add_plain_block(ps, post_name(i), cfg_, rng);
  return ps;
}

template <typename T>
Var<T> Network<T>::embed_input(const Context<T>& ctx, const Var<T>& x) const {
  const Var<T> tokens = patchify(x, cfg_);
  const Var<T> h = o::linear(tokens, ctx.param("embed.w"), ctx.param("embed.b"));
  return o::add(h, Var<T>::constant(position_table<T>(cfg_.token_count(), cfg_.width)));
}

template <typename T>
Var<T> Network<T>::embed_conditioning(const Context<T>& ctx, const std::vector<int>& t,
                                      const std::vector<int>& labels) const {
  if (t.size() != labels.size()) throw UsageError("embed_conditioning: timestep and label batch sizes differ");
  std::vector<std::size_t> rows(labels.size());
  for (std::size_t b = 0; b < t.size(); ++b) {
    if (t[b] < 0 || std::size_t(t[b]) >= cfg_.timesteps) {
      throw UsageError("timestep " + std::to_string(t[b]) + " outside [0, " + std::to_string(cfg_.timesteps) + ")");
    }
    if (labels[b] == kNullClass) {
      rows[b] = cfg_.null_class();
    } else if (labels[b] < 0 || std::size_t(labels[b]) >= cfg_.n_classes) {
      throw UsageError("class label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(cfg_.n_classes) + ")");
    } else {
      rows[b] = std::size_t(labels[b]);
    }
  }
  const Var<T> f = Var<T>::constant(timestep_features<T>(t, cfg_.freq_dim));
  const Var<T> h = o::silu(o::linear(f, ctx.param("t_embed.fc1.w"), ctx.param("t_embed.fc1.b")));
  const Var<T> te = o::linear(h, ctx.param("t_embed.fc2.w"), ctx.param("t_embed.fc2.b"));
  return o::add(te, o::gather_rows(ctx.param("class_table"), rows));
}

template <typename T>
Var<T> Network<T>::pre_forward(const Context<T>& ctx, const Var<T>& x_input) const {
  const Shape& s = x_input.shape();
  if (s.size() != 3 || s[1] != cfg_.token_count() || s[2] != cfg_.width) {
    throw UsageError("pre_forward: expected [B, " + std::to_string(cfg_.token_count()) + ", " +
                     std::to_string(cfg_.width) + "], got " + shape_str(s));
  }
  Var<T> h = x_input;
  for (std::size_t i = 0; i < cfg_.n_pre; ++i) h = plain_block(ctx, pre_name(i), h, cfg_);
  return h;
}

template <typename T>
Var<T> Network<T>::inject(const Context<T>& ctx, const Var<T>& x_pre) const {
  ++ctx.counters().inject_calls;
  return o::linear(x_pre, ctx.param(std::string(kInject) + ".w"), ctx.param(std::string(kInject) + ".b"));
}

template <typename T>
Modulation<T> Network<T>::implicit_modulation(const Context<T>& ctx, const Var<T>& cond) const {
  return modulation(ctx, kBlock, cond);
}

template <typename T>
Var<T> Network<T>::fp_step(const Context<T>& ctx, const Var<T>& x, const Var<T>& x_tilde, const Modulation<T>& mod,
                           int iteration) const {
  if (x.shape() != x_tilde.shape()) throw UsageError("fp_step: x and x_tilde shapes differ");
  try {
    return cond_block(ctx, kBlock, x, mod, cfg_, &x_tilde);
  } catch (const NumericError& e) {
    throw NumericError("fixed-point iteration " + std::to_string(iteration) + ": " + e.what());
  }
}

template <typename T>
Var<T> Network<T>::head(const Context<T>& ctx, const Var<T>& h) const {
  Var<T> y = h;
  if (cfg_.final_norm) y = o::layer_norm_affine(y, ctx.param("final.ln.g"), ctx.param("final.ln.b"));
  return unpatchify(o::linear(y, ctx.param("final.w"), ctx.param("final.b")), cfg_);
}

template <typename T>
Var<T> Network<T>::post_forward(const Context<T>& ctx, const Var<T>& x_star) const {
  const Shape& s = x_star.shape();
  if (s.size() != 3 || s[1] != cfg_.token_count() || s[2] != cfg_.width) {
    throw UsageError("post_forward: unexpected shape " + shape_str(s));
  }
  Var<T> h = x_star;
  for (std::size_t i = 0; i < cfg_.n_post; ++i) h = plain_block(ctx, post_name(i), h, cfg_);
  return head(ctx, h);
}

template <typename T>
Var<T> Network<T>::forward(const Context<T>& ctx, const Tensor<T>& x, const std::vector<int>& t,
                           const std::vector<int>& labels, int iters) const {
  const Var<T> c = embed_conditioning(ctx, t, labels);
  const Var<T> x_pre = pre_forward(ctx, embed_input(ctx, Var<T>::constant(x)));
  const Var<T> x_tilde = inject(ctx, x_pre);
  const Modulation<T> mod = implicit_modulation(ctx, c);
  Var<T> z = x_tilde;
  for (int i = 0; i < iters; ++i) z = fp_step(ctx, z, x_tilde, mod, i);
  return post_forward(ctx, z);
}

template <typename T>
ExplicitBaseline<T>::ExplicitBaseline(NetworkConfig cfg, std::size_t n_blocks, std::vector<std::string> mid_names)
    : net_(cfg), n_blocks_(n_blocks), mid_names_(std::move(mid_names)) {
  if (n_blocks == 0) throw UsageError("explicit baseline needs at least one block");
  if (n_blocks <= cfg.n_pre + cfg.n_post) {
    throw UsageError("explicit baseline needs more than n_pre + n_post blocks");
  }
  const std::size_t mids = n_blocks - cfg.n_pre - cfg.n_post;
  if (mid_names_.empty()) {
    for (std::size_t i = 0; i < mids; ++i) mid_names_.push_back("mid." + std::to_string(i));
  } else if (mid_names_.size() != mids) {
    throw UsageError("explicit baseline: mid_names must list " + std::to_string(mids) + " prefixes");
  }
}

template <typename T>
ParamStore<T> ExplicitBaseline<T>::init(std::uint64_t seed) const {
  Rng rng(seed);
  ParamStore<T> ps;
  const auto& cfg = net_.config();
  net_.add_shared_params(ps, rng);
  for (std::size_t i = 0; i < cfg.n_pre; ++i) add_plain_block(ps, Network<T>::pre_name(i), cfg, rng);
  for (const auto& m : mid_names_) add_cond_block(ps, m, cfg, rng);
  for (std::size_t i = 0; i < cfg.n_post; ++i) add_plain_block(ps, Network<T>::post_name(i), cfg, rng);
  return ps;
}

template <typename T>
Var<T> ExplicitBaseline<T>::forward(const Context<T>& ctx, const Tensor<T>& x, const std::vector<int>& t,
                                    const std::vector<int>& labels) const {
  const auto& cfg = net_.config();
  const Var<T> c = net_.embed_conditioning(ctx, t, labels);
  Var<T> h = net_.pre_forward(ctx, net_.embed_input(ctx, Var<T>::constant(x)));
  for (const auto& m : mid_names_) h = cond_block(ctx, m, h, modulation(ctx, m, c), cfg);
  return net_.post_forward(ctx, h);
}

#define FPDM_INSTANTIATE_NET(T)                                                     \
  template Tensor<T> timestep_features<T>(const std::vector<int>&, std::size_t);    \
  template Tensor<T> position_table<T>(std::size_t, std::size_t);                   \
  template Var<T> patchify(const Var<T>&, const NetworkConfig&);                    \
  template Var<T> unpatchify(const Var<T>&, const NetworkConfig&);                  \
  template class Network<T>;                                                        \
  template class ExplicitBaseline<T>;

FPDM_INSTANTIATE_NET(float)
FPDM_INSTANTIATE_NET(double)

#undef FPDM_INSTANTIATE_NET

}  // namespace fpdm::net

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpdm/net/blocks.hpp"

namespace fpdm::net {

inline constexpr int kNullClass = -1;

// [B, freq_dim] sinusoidal timestep features: cos half then sin half.
template <typename T>
Tensor<T> timestep_features(const std::vector<int>& t, std::size_t freq_dim);

// Fixed (not learned) sinusoidal position table, [L, W].
template <typename T>
Tensor<T> position_table(std::size_t tokens, std::size_t width);

// Data [B, ...sample_shape] to tokens [B, L, P] and back, as differentiable ops.
template <typename T>
Var<T> patchify(const Var<T>& x, const NetworkConfig& cfg);
template <typename T>
Var<T> unpatchify(const Var<T>& tokens, const NetworkConfig& cfg);

// The fixed-point denoiser: pre blocks, injection projection, one
// weight-shared conditioned block iterated by the solver, post blocks.
template <typename T>
class Network {
 public:
  explicit Network(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }
  ParamStore<T> init(std::uint64_t seed) const;

  // Parameter name prefixes.
  static std::string pre_name(std::size_t i) { return "pre." + std::to_string(i); }
  static std::string post_name(std::size_t i) { return "post." + std::to_string(i); }
  static constexpr const char* kBlock = "fp.block";
  static constexpr const char* kInject = "fp.inject";

  // Embedding, conditioning and output head, shared with the explicit baseline.
  void add_shared_params(ParamStore<T>& ps, Rng& rng) const;

  // [B, ...] data to embedded tokens [B, L, W].
  Var<T> embed_input(const Context<T>& ctx, const Var<T>& x) const;
  // Timestep plus class (kNullClass for the null token) embedding, [B, W].
  Var<T> embed_conditioning(const Context<T>& ctx, const std::vector<int>& t, const std::vector<int>& labels) const;

  Var<T> pre_forward(const Context<T>& ctx, const Var<T>& x_input) const;
  Var<T> inject(const Context<T>& ctx, const Var<T>& x_pre) const;
  Modulation<T> implicit_modulation(const Context<T>& ctx, const Var<T>& cond) const;
  // One application of the implicit block to x with x_tilde on the first
  // residual path: x_tilde + g1 attn(x) + g2 mlp(.). iteration is only used to
  // label numeric errors.
  Var<T> fp_step(const Context<T>& ctx, const Var<T>& x, const Var<T>& x_tilde, const Modulation<T>& mod,
                 int iteration = -1) const;
  Var<T> post_forward(const Context<T>& ctx, const Var<T>& x_star) const;

  // Output head after the post blocks: optional norm, projection, unpatching.
  Var<T> head(const Context<T>& ctx, const Var<T>& h) const;

  // Plain forward with `iters` fixed-point steps from x_tilde.
  Var<T> forward(const Context<T>& ctx, const Tensor<T>& x, const std::vector<int>& t, const std::vector<int>& labels,
                 int iters) const;

 private:
  NetworkConfig cfg_;
};

// Stack of n_blocks distinct explicit blocks: n_pre plain, the rest
// conditioned, n_post plain, sharing embedding and head with Network.
template <typename T>
class ExplicitBaseline {
 public:
  // mid_names overrides the conditioned blocks' parameter prefixes (used to
  // tie weights to a Network); default "mid.<i>".
  ExplicitBaseline(NetworkConfig cfg, std::size_t n_blocks, std::vector<std::string> mid_names = {});

  ParamStore<T> init(std::uint64_t seed) const;
  std::size_t n_blocks() const { return n_blocks_; }
  const std::vector<std::string>& mid_names() const { return mid_names_; }

  Var<T> forward(const Context<T>& ctx, const Tensor<T>& x, const std::vector<int>& t,
                 const std::vector<int>& labels) const;

 private:
  Network<T> net_;
  std::size_t n_blocks_;
  std::vector<std::string> mid_names_;
};

}  // namespace fpdm::net

#pragma once

#include <span>
#include <vector>

#include "fpdm/diffusion/schedule.hpp"
#include "fpdm/tensor/random.hpp"

namespace fpdm::diffusion {

// Marks the clean endpoint after the last sampled timestep (alpha_bar = 1).
inline constexpr int kClean = -1;

enum class SamplerKind { kDdpm, kDdim };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kDdpm;
  std::vector<int> timesteps;  // strictly decreasing, first == T - 1
  double guidance = 1.0;
  std::uint64_t seed = 0;

  void validate(const NoiseSchedule& s) const;
};

// S timesteps evenly spaced in training index: floor((T - 1)(S - i) / S) for
// i = 0..S-1. Starts at T - 1 and is strictly decreasing for 1 <= S <= T.
std::vector<int> timestep_subset(std::size_t T, std::size_t S);

// Successor of timesteps[i] in the chain; kClean after the last one.
int previous_timestep(const std::vector<int>& timesteps, std::size_t i);

template <typename T>
struct Posterior {
  Tensor<T> mean;
  double variance = 0.0;
};

// Gaussian posterior q(x_prev | x_t, x0_hat) with x0_hat clipped to [-1, 1]
// and fixed variance (1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev).
template <typename T>
Posterior<T> ddpm_posterior(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v_pred, int t, int t_prev);

// Ancestral step. rngs holds one stream per leading index of x_t, or a single
// shared stream. No noise is drawn when t_prev <= 0.
template <typename T>
Tensor<T> ddpm_step(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v_pred, int t, int t_prev,
                    std::span<Rng> rngs);

// x_prev = sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev) eps_hat, x0_hat clipped.
template <typename T>
Tensor<T> ddim_step(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v_pred, int t, int t_prev);

// v_uncond + w (v_cond - v_uncond).
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& v_cond, const Tensor<T>& v_uncond, double w);

// Seed of chain i's stream.
inline std::uint64_t chain_seed(std::uint64_t seed, std::uint64_t chain) { return mix_seed(seed, chain); }

}  // namespace fpdm::diffusion

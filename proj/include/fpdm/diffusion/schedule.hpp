#pragma once

#include <cstddef>
#include <vector>

#include "fpdm/tensor/tensor.hpp"

namespace fpdm::diffusion {

// Tables for T training timesteps, kept in double.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta, alpha, alpha_bar;
  std::vector<double> sqrt_alpha_bar, sqrt_one_minus_alpha_bar;
  // Linear betas and their alpha_bar before the zero-terminal-SNR rescale.
  std::vector<double> base_beta, base_alpha_bar;

  double snr(std::size_t t) const { return alpha_bar.at(t) / (1.0 - alpha_bar.at(t)); }
  void check_timestep(int t) const;
};

// Linear beta from beta_start to beta_end inclusive, then (when zero_snr) the
// sqrt(alpha_bar) sequence is shifted and scaled so its last entry is 0 and
// its first entry is unchanged.
NoiseSchedule build_schedule(std::size_t T = 1000, double beta_start = 1e-4, double beta_end = 0.02,
                             bool zero_snr = true);

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps. t holds one timestep per leading
// index of x0.
template <typename T>
Tensor<T> q_sample(const NoiseSchedule& s, const Tensor<T>& x0, const std::vector<int>& t, const Tensor<T>& eps);

// v = sqrt(ab) eps - sqrt(1 - ab) x0.
template <typename T>
Tensor<T> v_target(const NoiseSchedule& s, const Tensor<T>& x0, const Tensor<T>& eps, const std::vector<int>& t);

template <typename T>
struct X0Eps {
  Tensor<T> x0, eps;
};

// x0 = sqrt(ab) x_t - sqrt(1 - ab) v;  eps = sqrt(1 - ab) x_t + sqrt(ab) v.
template <typename T>
X0Eps<T> predict_from_v(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v, const std::vector<int>& t);

}  // namespace fpdm::diffusion

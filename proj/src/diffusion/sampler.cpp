#include "fpdm/diffusion/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fpdm::diffusion {

void SamplerConfig::validate(const NoiseSchedule& s) const {
  if (timesteps.empty()) throw UsageError("sampler needs at least one timestep");
  if (timesteps.front() != int(s.T) - 1) throw UsageError("sampling timesteps must start at T - 1");
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    s.check_timestep(timesteps[i]);
    if (i > 0 && timesteps[i] >= timesteps[i - 1]) throw UsageError("sampling timesteps must strictly decrease");
  }
  if (!(guidance >= 0) || !std::isfinite(guidance)) throw UsageError("guidance scale must be finite and >= 0");
}

std::vector<int> timestep_subset(std::size_t T, std::size_t S) {
  if (S < 1 || S > T) {
    throw UsageError("cannot pick " + std::to_string(S) + " sampling steps from " + std::to_string(T) + " timesteps");
  }
  std::vector<int> ts(S);
  for (std::size_t i = 0; i < S; ++i) ts[i] = int(((T - 1) * (S - i)) / S);
  return ts;
}

int previous_timestep(const std::vector<int>& timesteps, std::size_t i) {
  if (i >= timesteps.size()) throw UsageError("sampling step index out of range");
  return i + 1 < timesteps.size() ? timesteps[i + 1] : kClean;
}

namespace {

double alpha_bar_at(const NoiseSchedule& s, int t) {
  if (t == kClean) return 1.0;
  s.check_timestep(t);
  return s.alpha_bar[std::size_t(t)];
}

template <typename T>
void check_pair(const Tensor<T>& x_t, const Tensor<T>& v, int t, int t_prev, bool allow_equal) {
  if (x_t.shape() != v.shape()) throw UsageError("sampler: x_t and v_pred shapes differ");
  if (t_prev > t || (!allow_equal && t_prev == t)) {
    throw UsageError("sampler needs t_prev < t, got t=" + std::to_string(t) + " t_prev=" + std::to_string(t_prev));
  }
}

template <typename T>
void check_finite(const Tensor<T>& x, int t) {
  if (!x.all_finite()) throw NumericError("sampler produced a non-finite value at timestep " + std::to_string(t));
}

double clip(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

template <typename T>
Posterior<T> ddpm_posterior(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v_pred, int t, int t_prev) {
  check_pair(x_t, v_pred, t, t_prev, false);
  const double ab = alpha_bar_at(s, t), ab_prev = alpha_bar_at(s, t_prev);
  const double sa = s.sqrt_alpha_bar[std::size_t(t)], so = s.sqrt_one_minus_alpha_bar[std::size_t(t)];
  const double beta_eff = 1.0 - ab / ab_prev;
  const double c0 = std::sqrt(ab_prev) * beta_eff / (1.0 - ab);
  const double ct = std::sqrt(1.0 - beta_eff) * (1.0 - ab_prev) / (1.0 - ab);
  Posterior<T> out;
  out.mean = Tensor<T>(x_t.shape());
  for (std::size_t i = 0; i < x_t.numel(); ++i) {
    const double x = x_t[i], v = v_pred[i];
    const double x0 = clip(sa * x - so * v);
    out.mean[i] = T(c0 * x0 + ct * x);
  }
  out.variance = (1.0 - ab_prev) / (1.0 - ab) * beta_eff;
  check_finite(out.mean, t);
  return out;
}

template <typename T>
Tensor<T> ddpm_step(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v_pred, int t, int t_prev,
                    std::span<Rng> rngs) {
  Posterior<T> p = ddpm_posterior(s, x_t, v_pred, t, t_prev);
  if (t_prev <= 0) return std::move(p.mean);
  const std::size_t rows = x_t.dim(0), n = x_t.numel() / rows;
  if (rngs.size() != 1 && rngs.size() != rows) {
    throw UsageError("ddpm_step needs one RNG stream or one per chain");
  }
  const double sd = std::sqrt(p.variance);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    Rng& g = rngs.size() == 1 ? rngs[0] : rngs[r];
    for (std::size_t i = r * n; i < (r + 1) * n; ++i) p.mean[i] = T(double(p.mean[i]) + sd * z(g));
  }
  check_finite(p.mean, t);
  return std::move(p.mean);
}

template <typename T>
Tensor<T> ddim_step(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v_pred, int t, int t_prev) {
  check_pair(x_t, v_pred, t, t_prev, true);
  const double ab_prev = alpha_bar_at(s, t_prev);
  const double sa = s.sqrt_alpha_bar[std::size_t(t)], so = s.sqrt_one_minus_alpha_bar[std::size_t(t)];
  const double sp = std::sqrt(ab_prev), sop = std::sqrt(1.0 - ab_prev);
  Tensor<T> out(x_t.shape());
  for (std::size_t i = 0; i < x_t.numel(); ++i) {
    const double x = x_t[i], v = v_pred[i];
    const double x0 = clip(sa * x - so * v);
    const double eps = so * x + sa * v;
    out[i] = T(sp * x0 + sop * eps);
  }
  check_finite(out, t);
  return out;
}

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& v_cond, const Tensor<T>& v_uncond, double w) {
  if (v_cond.shape() != v_uncond.shape()) throw UsageError("cfg_combine: shapes differ");
  if (!(w >= 0)) throw UsageError("cfg_combine: guidance scale must be >= 0");
  if (w == 1.0) return v_cond;
  if (w == 0.0) return v_uncond;
  Tensor<T> out(v_cond.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = T(double(v_uncond[i]) + w * (double(v_cond[i]) - double(v_uncond[i])));
  }
  return out;
}

#define FPDM_INSTANTIATE_SAMPLER(T)                                                                          \
  template Posterior<T> ddpm_posterior(const NoiseSchedule&, const Tensor<T>&, const Tensor<T>&, int, int);  \
  template Tensor<T> ddpm_step(const NoiseSchedule&, const Tensor<T>&, const Tensor<T>&, int, int, std::span<Rng>); \
  template Tensor<T> ddim_step(const NoiseSchedule&, const Tensor<T>&, const Tensor<T>&, int, int);          \
  template Tensor<T> cfg_combine(const Tensor<T>&, const Tensor<T>&, double);

FPDM_INSTANTIATE_SAMPLER(float)
FPDM_INSTANTIATE_SAMPLER(double)

#undef FPDM_INSTANTIATE_SAMPLER

}  // namespace fpdm::diffusion

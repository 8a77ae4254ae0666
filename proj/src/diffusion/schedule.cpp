#include "fpdm/diffusion/schedule.hpp"

#include <cmath>
#include <string>

namespace fpdm::diffusion {

void NoiseSchedule::check_timestep(int t) const {
  if (t < 0 || std::size_t(t) >= T) {
    throw UsageError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
  }
}

NoiseSchedule build_schedule(std::size_t T, double beta_start, double beta_end, bool zero_snr) {
  if (T < 2) throw UsageError("schedule needs T >= 2");
  if (!(beta_start > 0 && beta_start < beta_end && beta_end < 1)) {
    throw UsageError("schedule needs 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  std::vector<double> beta(T);
  for (std::size_t i = 0; i < T; ++i) {
    beta[i] = beta_start + (beta_end - beta_start) * double(i) / double(T - 1);
  }
  beta[T - 1] = beta_end;
  s.base_beta = beta;
  s.base_alpha_bar.resize(T);
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    prod *= 1.0 - beta[i];
    s.base_alpha_bar[i] = prod;
  }

  std::vector<double> sab(T);
  for (std::size_t i = 0; i < T; ++i) sab[i] = std::sqrt(s.base_alpha_bar[i]);
  if (zero_snr) {
    const double first = sab[0], last = sab[T - 1];
    for (double& v : sab) v = (v - last) * first / (first - last);
    sab[0] = first;
    sab[T - 1] = 0.0;
  }

  s.alpha_bar.resize(T);
  s.alpha.resize(T);
  s.beta.resize(T);
  s.sqrt_alpha_bar = sab;
  s.sqrt_one_minus_alpha_bar.resize(T);
  for (std::size_t i = 0; i < T; ++i) {
    s.alpha_bar[i] = sab[i] * sab[i];
    s.alpha[i] = i == 0 ? s.alpha_bar[0] : s.alpha_bar[i] / s.alpha_bar[i - 1];
    s.beta[i] = 1.0 - s.alpha[i];
    s.sqrt_one_minus_alpha_bar[i] = std::sqrt(1.0 - s.alpha_bar[i]);
  }
  if (!zero_snr) s.beta = beta;
  return s;
}

namespace {

template <typename T>
std::size_t row_size(const Tensor<T>& x, const std::vector<int>& t) {
  if (x.rank() < 1 || x.dim(0) != t.size()) {
    throw UsageError("expected one timestep per leading index, got " + std::to_string(t.size()) + " for shape " +
                     shape_str(x.shape()));
  }
  return x.numel() / t.size();
}

template <typename T>
void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
}

// out = ca(t) a + cb(t) b, row by row.
template <typename T, typename Fa, typename Fb>
Tensor<T> combine(const NoiseSchedule& s, const Tensor<T>& a, const Tensor<T>& b, const std::vector<int>& t, Fa ca,
                  Fb cb) {
  const std::size_t n = row_size(a, t);
  Tensor<T> out(a.shape());
  for (std::size_t r = 0; r < t.size(); ++r) {
    s.check_timestep(t[r]);
    const double wa = ca(std::size_t(t[r])), wb = cb(std::size_t(t[r]));
    for (std::size_t i = r * n; i < (r + 1) * n; ++i) out[i] = T(wa * double(a[i]) + wb * double(b[i]));
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> q_sample(const NoiseSchedule& s, const Tensor<T>& x0, const std::vector<int>& t, const Tensor<T>& eps) {
  same_shape(x0, eps, "q_sample");
  return combine(
      s, x0, eps, t, [&](std::size_t i) { return s.sqrt_alpha_bar[i]; },
      [&](std::size_t i) { return s.sqrt_one_minus_alpha_bar[i]; });
}

template <typename T>
Tensor<T> v_target(const NoiseSchedule& s, const Tensor<T>& x0, const Tensor<T>& eps, const std::vector<int>& t) {
  same_shape(x0, eps, "v_target");
  return combine(
      s, eps, x0, t, [&](std::size_t i) { return s.sqrt_alpha_bar[i]; },
      [&](std::size_t i) { return -s.sqrt_one_minus_alpha_bar[i]; });
}

template <typename T>
X0Eps<T> predict_from_v(const NoiseSchedule& s, const Tensor<T>& x_t, const Tensor<T>& v, const std::vector<int>& t) {
  same_shape(x_t, v, "predict_from_v");
  X0Eps<T> out;
  out.x0 = combine(
      s, x_t, v, t, [&](std::size_t i) { return s.sqrt_alpha_bar[i]; },
      [&](std::size_t i) { return -s.sqrt_one_minus_alpha_bar[i]; });
  out.eps = combine(
      s, x_t, v, t, [&](std::size_t i) { return s.sqrt_one_minus_alpha_bar[i]; },
      [&](std::size_t i) { return s.sqrt_alpha_bar[i]; });
  return out;
}

#define FPDM_INSTANTIATE_SCHEDULE(T)                                                                          \
  template Tensor<T> q_sample(const NoiseSchedule&, const Tensor<T>&, const std::vector<int>&, const Tensor<T>&); \
  template Tensor<T> v_target(const NoiseSchedule&, const Tensor<T>&, const Tensor<T>&, const std::vector<int>&); \
  template X0Eps<T> predict_from_v(const NoiseSchedule&, const Tensor<T>&, const Tensor<T>&, const std::vector<int>&);

FPDM_INSTANTIATE_SCHEDULE(float)
FPDM_INSTANTIATE_SCHEDULE(double)

#undef FPDM_INSTANTIATE_SCHEDULE

}  // namespace fpdm::diffusion

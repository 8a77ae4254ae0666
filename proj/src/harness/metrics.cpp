#include "fpdm/harness/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fpdm/tensor/random.hpp"

namespace fpdm::harness {

namespace {

std::size_t dims_of(const TensorF& x) { return x.numel() / x.dim(0); }

void check_pair(const TensorF& a, const TensorF& b) {
  if (dims_of(a) != dims_of(b)) throw UsageError("metrics: sample dimensions differ");
}

double sq_dist(const float* x, const float* y, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = double(x[k]) - double(y[k]);
    s += t * t;
  }
  return s;
}

}  // namespace

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw UsageError("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a - F_b| over the merged breakpoints.
  const double na = double(a.size()), nb = double(b.size());
  std::size_t i = 0, j = 0;
  double x = std::min(a[0], b[0]);
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    double next;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      next = a[i];
    } else {
      next = b[j];
    }
    total += std::abs(double(i) / na - double(j) / nb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return total;
}

double sliced_wasserstein(const TensorF& a, const TensorF& b, int projections, std::uint64_t seed) {
  check_pair(a, b);
  if (projections < 1) throw UsageError("sliced_wasserstein needs at least one projection");
  const std::size_t d = dims_of(a);
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> u(d), pa(a.dim(0)), pb(b.dim(0));
  double sum = 0.0;
  for (int p = 0; p < projections; ++p) {
    double norm = 0.0;
    for (auto& v : u) {
      v = g(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += u[k] * a[i * d + k];
      pa[i] = s;
    }
    for (std::size_t i = 0; i < pb.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += u[k] * b[i * d + k];
      pb[i] = s;
    }
    sum += wasserstein_1d(pa, pb);
  }
  return sum / projections;
}

double mmd_rbf(const TensorF& a, const TensorF& b) {
  check_pair(a, b);
  const std::size_t d = dims_of(a), n = a.dim(0), m = b.dim(0);
  if (n < 2 || m < 2) throw UsageError("mmd_rbf needs at least two samples per side");
  const float* pa = a.raw();
  const float* pb = b.raw();
  auto row = [&](std::size_t i) { return i < n ? pa + i * d : pb + (i - n) * d; };

  std::vector<double> dists;
  dists.reserve((n + m) * (n + m - 1) / 2);
  for (std::size_t i = 0; i < n + m; ++i) {
    for (std::size_t j = i + 1; j < n + m; ++j) dists.push_back(sq_dist(row(i), row(j), d));
  }
  const auto mid = dists.begin() + std::ptrdiff_t(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double h2 = *mid;  // median squared distance
  if (!(h2 > 0)) h2 = 1.0;

  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) kaa += std::exp(-sq_dist(pa + i * d, pa + j * d, d) / h2);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) kbb += std::exp(-sq_dist(pb + i * d, pb + j * d, d) / h2);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) kab += std::exp(-sq_dist(pa + i * d, pb + j * d, d) / h2);
  }
  return 2.0 * kaa / (double(n) * double(n - 1)) + 2.0 * kbb / (double(m) * double(m - 1)) -
         2.0 * kab / (double(n) * double(m));
}

EvalResult evaluate(const TensorF& samples, const TensorF& reference) {
  if (samples.dim(0) < kMinEvalSamples || reference.dim(0) < kMinEvalSamples) {
    throw UsageError("evaluate needs at least " + std::to_string(kMinEvalSamples) + " samples on each side (got " +
                     std::to_string(samples.dim(0)) + " and " + std::to_string(reference.dim(0)) + ")");
  }
  return {sliced_wasserstein(samples, reference), mmd_rbf(samples, reference)};
}

}  // namespace fpdm::harness

#pragma once

#include <cstdint>

#include "fpdm/tensor/tensor.hpp"

namespace fpdm::harness {

inline constexpr std::size_t kMinEvalSamples = 500;
inline constexpr int kSwdProjections = 128;
inline constexpr std::uint64_t kSwdSeed = 0x5eed;

struct EvalResult {
  double swd = 0.0;
  double mmd = 0.0;
};

// Exact W1 between two 1D empirical distributions (CDF integration).
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

// Mean W1 over fixed-seed random unit projections. Rows of a and b are
// samples of equal dimension; sample counts may differ.
double sliced_wasserstein(const TensorF& a, const TensorF& b, int projections = kSwdProjections,
                          std::uint64_t seed = kSwdSeed);

// Unbiased RBF MMD^2; bandwidth from the median pairwise distance of the
// pooled set.
double mmd_rbf(const TensorF& a, const TensorF& b);

// Both metrics; each side needs at least kMinEvalSamples rows.
EvalResult evaluate(const TensorF& samples, const TensorF& reference);

}  // namespace fpdm::harness

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fpdm/tensor/params.hpp"

namespace fpdm::solver {

inline constexpr double kDivergenceDelta = 1e4;

struct SolverConfig {
  enum class Mode { kFixed, kThreshold };
  Mode mode = Mode::kFixed;
  int k = 1;
  double theta = 1e-3;
  int max_iters = 1;

  static SolverConfig fixed(int k);
  static SolverConfig threshold(double theta, int max_iters);
  void validate() const;
};

template <typename T>
struct FixedPointTrace {
  int timestep = -1;
  int iterations_used = 0;
  std::vector<double> deltas;
  // Final two iterates; x_prev equals the initial state after one iteration.
  Tensor<T> x_prev, x_last;
};

template <typename T>
struct SolveResult {
  Var<T> x_star;
  FixedPointTrace<T> trace;
};

// One application of the implicit map; iteration is 0-based.
template <typename T>
using StepFn = std::function<Var<T>(const Var<T>& x, int iteration)>;

// RMS of x - prev, the residual used for stopping and diagnostics.
template <typename T>
double residual(const Tensor<T>& x, const Tensor<T>& prev);

// Plain fixed-point iteration. Fixed mode runs exactly k steps; threshold
// mode stops at the first residual <= theta or at max_iters. cap, when >= 0,
// lowers the iteration limit further (it may be 0 only in threshold mode,
// in which case x0 is returned untouched). Raises DivergenceError when an
// iterate is non-finite or a residual exceeds kDivergenceDelta.
template <typename T>
SolveResult<T> solve(const StepFn<T>& step, const Var<T>& x0, const SolverConfig& cfg, int timestep = -1,
                     int cap = -1);

// Returns previous unchanged when present, otherwise default_init; the first
// sampling step therefore falls back to the default even with reuse on.
template <typename T>
Var<T> init_solution(int timestep_index, const Var<T>& default_init, const std::optional<Var<T>>& previous);

// CSV rows (timestep, iteration, delta), iteration counted from 1.
template <typename T>
void write_trace_csv(std::ostream& os, const std::vector<FixedPointTrace<T>>& traces);

}  // namespace fpdm::solver

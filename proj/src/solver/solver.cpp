#include "fpdm/solver/solver.hpp"

#include <cmath>
#include <ostream>

#include "fpdm/format.hpp"

namespace fpdm::solver {

SolverConfig SolverConfig::fixed(int k) {
  SolverConfig c;
  c.mode = Mode::kFixed;
  c.k = k;
  c.validate();
  return c;
}

SolverConfig SolverConfig::threshold(double theta, int max_iters) {
  SolverConfig c;
  c.mode = Mode::kThreshold;
  c.theta = theta;
  c.max_iters = max_iters;
  c.validate();
  return c;
}

void SolverConfig::validate() const {
  if (mode == Mode::kFixed && k < 1) throw UsageError("fixed-count solver needs k >= 1");
  if (mode == Mode::kThreshold) {
    if (!(theta > 0)) throw UsageError("threshold solver needs theta > 0");
    if (max_iters < 1) throw UsageError("threshold solver needs max_iters >= 1");
  }
}

template <typename T>
double residual(const Tensor<T>& x, const Tensor<T>& prev) {
  return rms_diff(x, prev);
}

template <typename T>
SolveResult<T> solve(const StepFn<T>& step, const Var<T>& x0, const SolverConfig& cfg, int timestep, int cap) {
  cfg.validate();
  if (!x0.value().all_finite()) throw UsageError("solve: initial state is not finite");
  const bool fixed = cfg.mode == SolverConfig::Mode::kFixed;
  int limit = fixed ? cfg.k : cfg.max_iters;
  if (cap >= 0) {
    if (cap == 0 && fixed) throw UsageError("solve: a fixed-count solve cannot be capped at zero");
    limit = std::min(limit, cap);
  }

  SolveResult<T> out;
  out.trace.timestep = timestep;
  out.trace.x_prev = x0.value();
  out.trace.x_last = x0.value();
  Var<T> x = x0;
  for (int i = 0; i < limit; ++i) {
    Var<T> next;
    try {
      next = step(x, i);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string("fixed-point iterate became non-finite: ") + e.what(), out.trace.deltas, i);
    }
    const double d = residual(next.value(), x.value());
    out.trace.deltas.push_back(d);
    out.trace.iterations_used = i + 1;
    if (!std::isfinite(d) || d > kDivergenceDelta) {
      throw DivergenceError("fixed-point residual " + format_double(d) + " exceeds the divergence guard",
                            out.trace.deltas, i + 1);
    }
    out.trace.x_prev = x.value();
    x = std::move(next);
    if (!fixed && d <= cfg.theta) break;
  }
  out.trace.x_last = x.value();
  out.x_star = x;
  return out;
}

template <typename T>
Var<T> init_solution(int, const Var<T>& default_init, const std::optional<Var<T>>& previous) {
  if (previous && previous->valid()) return *previous;
  return default_init;
}

template <typename T>
void write_trace_csv(std::ostream& os, const std::vector<FixedPointTrace<T>>& traces) {
  os << "timestep,iteration,delta\n";
  for (const auto& tr : traces) {
    for (std::size_t i = 0; i < tr.deltas.size(); ++i) {
      os << tr.timestep << ',' << (i + 1) << ',' << format_double(tr.deltas[i]) << '\n';
    }
  }
}

#define FPDM_INSTANTIATE_SOLVER(T)                                                                   \
  template double residual(const Tensor<T>&, const Tensor<T>&);                                      \
  template SolveResult<T> solve(const StepFn<T>&, const Var<T>&, const SolverConfig&, int, int);     \
  template Var<T> init_solution(int, const Var<T>&, const std::optional<Var<T>>&);                   \
  template void write_trace_csv(std::ostream&, const std::vector<FixedPointTrace<T>>&);              \
  template struct FixedPointTrace<T>;

FPDM_INSTANTIATE_SOLVER(float)
FPDM_INSTANTIATE_SOLVER(double)

#undef FPDM_INSTANTIATE_SOLVER

}  // namespace fpdm::solver

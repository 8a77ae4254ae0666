#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fpdm/budget/plan.hpp"
#include "fpdm/diffusion/sampler.hpp"
#include "fpdm/net/network.hpp"
#include "fpdm/solver/solver.hpp"

namespace fpdm::harness {

enum class Heuristic { kConstant, kIncreasing, kDecreasing, kAdaptive };

Heuristic parse_heuristic(const std::string& s);
std::string heuristic_name(Heuristic h);
diffusion::SamplerKind parse_sampler(const std::string& s);
std::string sampler_name(diffusion::SamplerKind k);

struct SampleOptions {
  long budget = 280;
  int iters = 4;  // k for constant plans, mean k for ramps and adaptive
  Heuristic heuristic = Heuristic::kConstant;
  bool reuse = true;
  diffusion::SamplerKind sampler = diffusion::SamplerKind::kDdpm;
  double guidance = 1.0;
  std::uint64_t seed = 0;
  std::size_t count = 1000;
  int label = -1;                // class of every chain; -1 cycles chain % classes
  std::size_t probe_count = 256;  // adaptive probes run on the first chains
  int max_iters = 0;              // adaptive per-step cap; 0 means 2 * iters
  std::optional<budget::BudgetPlan> plan;  // overrides the heuristic
};

struct SampleResult {
  TensorF samples;
  budget::BudgetPlan plan;
  budget::AuditReport audit;
  std::vector<budget::StepPasses> passes;
  std::vector<solver::FixedPointTrace<float>> traces;
  // Adaptive only.
  double theta = 0.0;
  std::vector<budget::ProbeRecord> probes;
  long probe_cost = 0;
};

// Plan for the options without running the sampler; adaptive plans need a
// run, so this rejects kAdaptive.
budget::BudgetPlan make_plan(const net::NetworkConfig& cfg, const SampleOptions& opts);

// Draws opts.count chains. Chain i seeds its own stream from (seed, i), so a
// chain's output does not depend on count. The audit compares the block
// passes counted during sampling with the plan's cost; failure is reported
// in the result, not thrown.
SampleResult sample(const net::Network<float>& net, const ParamStore<float>& params,
                    const diffusion::NoiseSchedule& sched, const SampleOptions& opts);

// samples (samples.csv or PGM files), plan.csv, trace.csv, audit.csv and,
// for adaptive runs, probes.csv.
void write_sample_outputs(const std::string& dir, const SampleResult& r);

// Mean over steps of the last residual, per sampled timestep.
std::vector<double> last_deltas(const SampleResult& r);

}  // namespace fpdm::harness

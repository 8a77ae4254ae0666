#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace fpdm::budget {

// Block forward passes charged per sampling step.
struct CostModel {
  int n_pre = 1;
  int n_post = 1;

  long step_cost(int iterations) const { return long(n_pre) + iterations + n_post; }
  void validate() const;
};

struct PlanEntry {
  int step_index = 0;
  int train_timestep = 0;
  int iterations = 1;
};

struct BudgetPlan {
  std::string heuristic;
  long budget = 0;
  CostModel cost;
  std::vector<PlanEntry> entries;
  long total_cost = 0;

  std::size_t steps() const { return entries.size(); }
  std::vector<int> timesteps() const;
  long priced_cost() const;
  // Entries indexed 0..S-1, timesteps strictly decreasing, k >= 1, and
  // total_cost matching the entries.
  void validate() const;
};

enum class Direction { kIncreasing, kDecreasing };

// S = floor(budget / (n_pre + k + n_post)) steps of k iterations each; the
// remainder of the budget is left unused.
BudgetPlan plan_constant(long budget, int k, const CostModel& cost, std::size_t T = 1000);

// S steps whose iteration counts grow linearly toward the low-noise end
// (increasing) or the high-noise end (decreasing): round(2k(s+1)/(S+1)),
// floored at 1, where k is the matched constant plan's count at S steps.
// The heavy end absorbs rounding so the mean stays k, then takes extra
// iterations only while the unused budget exceeds n_pre + n_post.
BudgetPlan plan_ramp(long budget, Direction direction, std::size_t S, const CostModel& cost, std::size_t T = 1000);

// What one adaptive probe observed at a candidate threshold.
struct ProbeResult {
  long cost = 0;
  BudgetPlan plan;
};
using Probe = std::function<ProbeResult(double theta)>;

struct AdaptiveOptions {
  int probes = 8;
  double theta_lo = 1e-6;
  double theta_hi = 1.0;
};

struct ProbeRecord {
  double theta = 0.0;
  long cost = 0;
};

struct AdaptiveResult {
  double theta = 0.0;
  BudgetPlan plan;
  std::vector<ProbeRecord> history;  // the feasibility check first
};

// Bisection over log theta. theta_hi is checked first and must fit the
// budget; each probe then moves the upper bound down when the realized cost
// fits and the lower bound up otherwise. Returns the final upper bound and
// the plan observed there.
AdaptiveResult plan_adaptive(long budget, const Probe& probe, const CostModel& cost,
                             const AdaptiveOptions& opts = {});

// Block passes counted while sampling one plan step.
struct StepPasses {
  int step_index = 0;
  int train_timestep = 0;
  long passes = 0;
};

struct AuditReport {
  bool ok = false;
  long counted = 0;
  long expected = 0;
  int first_bad_step = -1;
  int first_bad_timestep = -1;
  std::string message;
};

AuditReport audit_cost(const BudgetPlan& plan, const std::vector<StepPasses>& trace);

// Two header lines ("# heuristic=... budget=... n_pre=... n_post=...
// total_cost=..." then the column names), then one row per entry.
void write_plan_csv(std::ostream& os, const BudgetPlan& plan);
BudgetPlan read_plan_csv(std::istream& is);

}  // namespace fpdm::budget

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fpdm/budget/plan.hpp"
#include "fpdm/errors.hpp"

using namespace fpdm;
using namespace fpdm::budget;

namespace {

std::vector<int> iterations(const BudgetPlan& p) {
  std::vector<int> out;
  for (const auto& e : p.entries) out.push_back(e.iterations);
  return out;
}

// A plan whose iterations are whatever cost the probe wants to report.
BudgetPlan plan_with_cost(long cost, int steps) {
  BudgetPlan p = plan_constant(long(steps) * 3, 1, CostModel{});
  p.entries.back().iterations += int(cost - p.total_cost);
  p.total_cost = p.priced_cost();
  return p;
}

std::vector<StepPasses> execute(const BudgetPlan& p) {
  std::vector<StepPasses> trace;
  for (const auto& e : p.entries) trace.push_back({e.step_index, e.train_timestep, p.cost.step_cost(e.iterations)});
  return trace;
}

}  // namespace

TEST(PlanConstant, FigureEndpoints) {
  const CostModel c;
  const BudgetPlan a = plan_constant(280, 1, c);
  EXPECT_EQ(a.steps(), 93u);
  EXPECT_EQ(a.total_cost, 279);
  const BudgetPlan b = plan_constant(280, 68, c);
  EXPECT_EQ(b.steps(), 4u);
  EXPECT_EQ(b.total_cost, 280);
  const BudgetPlan d = plan_constant(560, 26, c);
  EXPECT_EQ(d.steps(), 20u);
  EXPECT_EQ(d.total_cost, 560);
  EXPECT_EQ(d.total_cost, 28 * 20);
}

TEST(PlanConstant, SmoothingGrid) {
  const std::vector<int> ks{1, 2, 4, 8, 16, 26, 68};
  const std::vector<std::size_t> want{93, 70, 46, 28, 15, 10, 4};
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const BudgetPlan p = plan_constant(280, ks[i], CostModel{});
    EXPECT_EQ(p.steps(), want[i]) << ks[i];
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.entries.front().train_timestep, 999);
    EXPECT_LE(p.total_cost, 280);
  }
}

TEST(PlanConstant, Errors) {
  EXPECT_THROW(plan_constant(2, 1, CostModel{}), UsageError);
  EXPECT_THROW(plan_constant(280, 0, CostModel{}), UsageError);
  EXPECT_THROW(plan_constant(280, 1, CostModel{-1, 1}), UsageError);
  EXPECT_THROW(plan_constant(100000, 1, CostModel{0, 0}), UsageError);
}

TEST(PlanRamp, LinearRamp) {
  const BudgetPlan p = plan_ramp(28, Direction::kIncreasing, 4, CostModel{});
  EXPECT_EQ(iterations(p), (std::vector<int>{2, 4, 6, 8}));
  EXPECT_EQ(p.total_cost, 28);
  EXPECT_EQ(p.heuristic, "increasing");
}

TEST(PlanRamp, DecreasingMirrorsIncreasing) {
  for (auto [budget, S] : {std::pair{280L, 46u}, std::pair{280L, 28u}, std::pair{560L, 20u}, std::pair{199L, 13u}}) {
    const BudgetPlan inc = plan_ramp(budget, Direction::kIncreasing, S, CostModel{});
    const BudgetPlan dec = plan_ramp(budget, Direction::kDecreasing, S, CostModel{});
    auto a = iterations(inc), b = iterations(dec);
    std::reverse(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_EQ(inc.total_cost, dec.total_cost);
    EXPECT_EQ(inc.timesteps(), dec.timesteps());
    EXPECT_LE(inc.total_cost, budget);
    EXPECT_NO_THROW(inc.validate());
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LE(a[i - 1], a[i]);
  }
}

TEST(PlanRamp, MatchesConstantCost) {
  for (int k : {2, 4, 8}) {
    const BudgetPlan c = plan_constant(280, k, CostModel{});
    const BudgetPlan r = plan_ramp(280, Direction::kIncreasing, c.steps(), CostModel{});
    EXPECT_GE(r.total_cost, c.total_cost);
    EXPECT_LE(r.total_cost, 280);
  }
}

TEST(PlanRamp, SingleStepIsConstant) {
  const BudgetPlan r = plan_ramp(30, Direction::kIncreasing, 1, CostModel{});
  const BudgetPlan c = plan_constant(30, 28, CostModel{});
  EXPECT_EQ(iterations(r), iterations(c));
  EXPECT_EQ(r.total_cost, c.total_cost);
}

TEST(PlanRamp, Errors) {
  EXPECT_THROW(plan_ramp(8, Direction::kIncreasing, 4, CostModel{}), UsageError);
  EXPECT_THROW(plan_ramp(280, Direction::kIncreasing, 0, CostModel{}), UsageError);
  EXPECT_THROW(plan_ramp(280000, Direction::kIncreasing, 1001, CostModel{}), UsageError);
}

TEST(PlanAdaptive, FlatResponse) {
  int calls = 0;
  const Probe probe = [&](double) {
    ++calls;
    return ProbeResult{200, plan_with_cost(200, 20)};
  };
  const AdaptiveResult r = plan_adaptive(280, probe, CostModel{});
  EXPECT_EQ(calls, 9);
  EXPECT_EQ(r.plan.total_cost, 200);
  // Every probe fits, so the upper bound walks down by halving log theta.
  const double want = std::exp(std::log(1e-6) * (1.0 - std::pow(0.5, 8)));
  EXPECT_NEAR(std::log(r.theta), std::log(want), 1e-9);
  EXPECT_EQ(r.history.front().theta, 1.0);
  EXPECT_EQ(r.plan.heuristic, "adaptive");
}

TEST(PlanAdaptive, MonotoneCostFindsFrontier) {
  const double a = 100.0;
  const long budget = 280;
  auto cost_at = [&](double theta) { return long(std::floor(a / std::pow(theta, 0.1))); };
  const Probe probe = [&](double theta) { return ProbeResult{cost_at(theta), plan_with_cost(cost_at(theta), 30)}; };
  const AdaptiveResult r = plan_adaptive(budget, probe, CostModel{});
  EXPECT_LE(cost_at(r.theta), budget);
  // Brute-force scan for the smallest feasible theta.
  double frontier = 1.0;
  for (int i = 0; i <= 60000; ++i) {
    const double theta = std::exp(std::log(1e-6) * double(i) / 60000.0);
    if (cost_at(theta) <= budget) frontier = theta;
  }
  const double step = -std::log(1e-6) / std::pow(2.0, 8);
  EXPECT_GE(std::log(r.theta), std::log(frontier) - 1e-9);
  EXPECT_LE(std::log(r.theta) - std::log(frontier), step + 1e-9);
  EXPECT_EQ(r.plan.total_cost, cost_at(r.theta));
}

TEST(PlanAdaptive, InfeasibleBudget) {
  const Probe probe = [](double) { return ProbeResult{300, plan_with_cost(300, 10)}; };
  EXPECT_THROW(plan_adaptive(280, probe, CostModel{}), UsageError);
}

TEST(Audit, ConstantPlanCountsEveryPass) {
  const BudgetPlan p = plan_constant(560, 8, CostModel{});
  ASSERT_EQ(p.steps(), 56u);
  const AuditReport r = audit_cost(p, execute(p));
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.counted, 560);
  EXPECT_EQ(r.expected, 560);
}

TEST(Audit, NamesFirstDivergentTimestep) {
  const BudgetPlan p = plan_constant(280, 4, CostModel{});
  auto trace = execute(p);
  trace[7].passes += 1;
  const AuditReport r = audit_cost(p, trace);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.first_bad_step, 7);
  EXPECT_EQ(r.first_bad_timestep, p.entries[7].train_timestep);
  EXPECT_NE(r.message.find(std::to_string(p.entries[7].train_timestep)), std::string::npos);
  trace = execute(p);
  trace.pop_back();
  EXPECT_FALSE(audit_cost(p, trace).ok);
}

TEST(PlanCsv, RoundTrip) {
  for (const BudgetPlan& p : {plan_constant(280, 4, CostModel{}), plan_ramp(280, Direction::kDecreasing, 28, CostModel{2, 3})}) {
    std::ostringstream os;
    write_plan_csv(os, p);
    std::istringstream is(os.str());
    const BudgetPlan q = read_plan_csv(is);
    EXPECT_EQ(q.heuristic, p.heuristic);
    EXPECT_EQ(q.budget, p.budget);
    EXPECT_EQ(q.cost.n_pre, p.cost.n_pre);
    EXPECT_EQ(q.cost.n_post, p.cost.n_post);
    EXPECT_EQ(q.total_cost, p.total_cost);
    EXPECT_EQ(iterations(q), iterations(p));
    EXPECT_EQ(q.timesteps(), p.timesteps());
    std::ostringstream again;
    write_plan_csv(again, q);
    EXPECT_EQ(again.str(), os.str());
  }
}

TEST(PlanCsv, RejectsBrokenPlans) {
  std::ostringstream os;
  write_plan_csv(os, plan_constant(28, 5, CostModel{}));
  std::string text = os.str();
  const auto pos = text.find("total_cost=28");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 13, "total_cost=27");
  std::istringstream is(text);
  EXPECT_THROW(read_plan_csv(is), UsageError);
}

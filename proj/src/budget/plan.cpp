#include "fpdm/budget/plan.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "fpdm/diffusion/sampler.hpp"
#include "fpdm/errors.hpp"
#include "fpdm/format.hpp"

namespace fpdm::budget {

void CostModel::validate() const {
  if (n_pre < 0 || n_post < 0) throw UsageError("cost model needs n_pre, n_post >= 0");
}

std::vector<int> BudgetPlan::timesteps() const {
  std::vector<int> ts;
  ts.reserve(entries.size());
  for (const auto& e : entries) ts.push_back(e.train_timestep);
  return ts;
}

long BudgetPlan::priced_cost() const {
  long c = 0;
  for (const auto& e : entries) c += cost.step_cost(e.iterations);
  return c;
}

void BudgetPlan::validate() const {
  cost.validate();
  if (entries.empty()) throw UsageError("plan has no steps");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.step_index != int(i)) throw UsageError("plan step indices must run 0..S-1");
    if (e.iterations < 1) throw UsageError("plan step " + std::to_string(i) + " has fewer than 1 iteration");
    if (i > 0 && e.train_timestep >= entries[i - 1].train_timestep) {
      throw UsageError("plan timesteps must strictly decrease");
    }
  }
  if (total_cost != priced_cost()) throw UsageError("plan total_cost does not match its entries");
}

namespace {

BudgetPlan make_plan(std::string tag, long budget, const CostModel& cost, const std::vector<int>& iters,
                     std::size_t T) {
  const auto ts = diffusion::timestep_subset(T, iters.size());
  BudgetPlan p;
  p.heuristic = std::move(tag);
  p.budget = budget;
  p.cost = cost;
  for (std::size_t s = 0; s < iters.size(); ++s) p.entries.push_back({int(s), ts[s], iters[s]});
  p.total_cost = p.priced_cost();
  return p;
}

}  // namespace

BudgetPlan plan_constant(long budget, int k, const CostModel& cost, std::size_t T) {
  cost.validate();
  if (k < 1) throw UsageError("constant plan needs k >= 1");
  const long per = cost.step_cost(k);
  if (budget < per) {
    throw UsageError("budget " + std::to_string(budget) + " is below one step of cost " + std::to_string(per));
  }
  const long S = budget / per;
  if (std::size_t(S) > T) throw UsageError("budget admits more steps than training timesteps");
  return make_plan("constant", budget, cost, std::vector<int>(std::size_t(S), k), T);
}

BudgetPlan plan_ramp(long budget, Direction direction, std::size_t S, const CostModel& cost, std::size_t T) {
  cost.validate();
  if (S < 1 || S > T) throw UsageError("ramp plan needs 1 <= S <= T");
  const long k = budget / long(S) - cost.n_pre - cost.n_post;
  if (k < 1) {
    throw UsageError("budget " + std::to_string(budget) + " cannot give " + std::to_string(S) +
                     " steps at least one iteration each");
  }
  std::vector<int> it(S);
  long sum = 0;
  for (std::size_t s = 0; s < S; ++s) {
    it[s] = std::max(1, int(std::lround(2.0 * double(k) * double(s + 1) / double(S + 1))));
    sum += it[s];
  }
  // Heavy end is the last index while ascending.
  long target = k * long(S);
  const long base_cost = target + long(S) * (cost.n_pre + cost.n_post);
  target += std::max(0L, budget - base_cost - (cost.n_pre + cost.n_post));
  while (sum != target) {
    bool moved = false;
    for (std::size_t s = S; s-- > 0 && sum != target;) {
      if (sum > target && it[s] > 1) {
        --it[s];
        --sum;
        moved = true;
      } else if (sum < target) {
        ++it[s];
        ++sum;
        moved = true;
      }
    }
    if (!moved) throw UsageError("ramp plan cannot meet the budget");
  }
  if (direction == Direction::kDecreasing) std::reverse(it.begin(), it.end());
  return make_plan(direction == Direction::kIncreasing ? "increasing" : "decreasing", budget, cost, it, T);
}

AdaptiveResult plan_adaptive(long budget, const Probe& probe, const CostModel& cost, const AdaptiveOptions& opts) {
  cost.validate();
  if (!(opts.theta_lo > 0 && opts.theta_lo < opts.theta_hi) || opts.probes < 0) {
    throw UsageError("adaptive search needs 0 < theta_lo < theta_hi and probes >= 0");
  }
  AdaptiveResult out;
  ProbeResult top = probe(opts.theta_hi);
  out.history.push_back({opts.theta_hi, top.cost});
  if (top.cost > budget) {
    throw UsageError("budget " + std::to_string(budget) + " is infeasible: threshold " +
                     format_double(opts.theta_hi) + " already costs " + std::to_string(top.cost));
  }
  double lo = std::log(opts.theta_lo), hi = std::log(opts.theta_hi);
  out.plan = std::move(top.plan);
  for (int i = 0; i < opts.probes; ++i) {
    const double mid = 0.5 * (lo + hi);
    ProbeResult r = probe(std::exp(mid));
    out.history.push_back({std::exp(mid), r.cost});
    if (r.cost > budget) {
      lo = mid;
    } else {
      hi = mid;
      out.plan = std::move(r.plan);
    }
  }
  out.theta = std::exp(hi);
  out.plan.heuristic = "adaptive";
  out.plan.budget = budget;
  return out;
}

AuditReport audit_cost(const BudgetPlan& plan, const std::vector<StepPasses>& trace) {
  AuditReport r;
  r.expected = plan.total_cost;
  for (const auto& s : trace) r.counted += s.passes;
  const std::size_t n = std::max(plan.entries.size(), trace.size());
  for (std::size_t i = 0; i < n; ++i) {
    const bool have_plan = i < plan.entries.size(), have_run = i < trace.size();
    const long want = have_plan ? plan.cost.step_cost(plan.entries[i].iterations) : 0;
    const long got = have_run ? trace[i].passes : 0;
    const bool same_t = have_plan && have_run && plan.entries[i].train_timestep == trace[i].train_timestep;
    if (want != got || !same_t) {
      r.first_bad_step = int(i);
      r.first_bad_timestep = have_plan ? plan.entries[i].train_timestep : trace[i].train_timestep;
      std::ostringstream m;
      m << "audit mismatch at step " << i << " (timestep " << r.first_bad_timestep << "): planned " << want
        << " block passes, counted " << got;
      r.message = m.str();
      return r;
    }
  }
  if (r.counted != r.expected) {
    r.message = "audit total mismatch: planned " + std::to_string(r.expected) + ", counted " + std::to_string(r.counted);
    return r;
  }
  r.ok = true;
  r.message = "counted " + std::to_string(r.counted) + " block passes, as planned";
  return r;
}

void write_plan_csv(std::ostream& os, const BudgetPlan& plan) {
  os << "# heuristic=" << plan.heuristic << " budget=" << plan.budget << " n_pre=" << plan.cost.n_pre
     << " n_post=" << plan.cost.n_post << " total_cost=" << plan.total_cost << '\n';
  os << "step_index,train_timestep,iterations\n";
  for (const auto& e : plan.entries) os << e.step_index << ',' << e.train_timestep << ',' << e.iterations << '\n';
}

BudgetPlan read_plan_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw UsageError("plan CSV: missing header line");
  std::map<std::string, std::string> kv;
  std::istringstream hs(line.substr(2));
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw UsageError("plan CSV: malformed header field '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto field = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw UsageError(std::string("plan CSV: header lacks ") + k);
    return it->second;
  };
  BudgetPlan p;
  try {
    p.heuristic = field("heuristic");
    p.budget = std::stol(field("budget"));
    p.cost.n_pre = std::stoi(field("n_pre"));
    p.cost.n_post = std::stoi(field("n_post"));
    p.total_cost = std::stol(field("total_cost"));
  } catch (const std::logic_error&) {
    throw UsageError("plan CSV: header values must be integers");
  }
  if (!std::getline(is, line) || line != "step_index,train_timestep,iterations") {
    throw UsageError("plan CSV: unexpected column header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    PlanEntry e;
    char c1 = 0, c2 = 0;
    std::istringstream rs(line);
    if (!(rs >> e.step_index >> c1 >> e.train_timestep >> c2 >> e.iterations) || c1 != ',' || c2 != ',') {
      throw UsageError("plan CSV: malformed row '" + line + "'");
    }
    p.entries.push_back(e);
  }
  p.validate();
  return p;
}

}  // namespace fpdm::budget

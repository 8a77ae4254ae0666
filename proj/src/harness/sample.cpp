#include "fpdm/harness/sample.hpp"

#include <filesystem>
#include <fstream>

#include "fpdm/format.hpp"
#include "fpdm/harness/csv.hpp"
#include "fpdm/harness/data.hpp"

namespace fpdm::harness {
namespace fs = std::filesystem;
using budget::BudgetPlan;
using budget::CostModel;

Heuristic parse_heuristic(const std::string& s) {
  for (auto h : {Heuristic::kConstant, Heuristic::kIncreasing, Heuristic::kDecreasing, Heuristic::kAdaptive}) {
    if (heuristic_name(h) == s) return h;
  }
  throw UsageError("unknown heuristic '" + s + "' (constant|increasing|decreasing|adaptive)");
}

std::string heuristic_name(Heuristic h) {
  switch (h) {
    case Heuristic::kConstant:
      return "constant";
    case Heuristic::kIncreasing:
      return "increasing";
    case Heuristic::kDecreasing:
      return "decreasing";
    case Heuristic::kAdaptive:
      return "adaptive";
  }
  return "?";
}

diffusion::SamplerKind parse_sampler(const std::string& s) {
  if (s == "ddpm") return diffusion::SamplerKind::kDdpm;
  if (s == "ddim") return diffusion::SamplerKind::kDdim;
  throw UsageError("unknown sampler '" + s + "' (ddpm|ddim)");
}

std::string sampler_name(diffusion::SamplerKind k) { return k == diffusion::SamplerKind::kDdpm ? "ddpm" : "ddim"; }

namespace {

CostModel cost_of(const net::NetworkConfig& cfg) { return {int(cfg.n_pre), int(cfg.n_post)}; }

// Per-step iteration rule: a fixed count, or a threshold with a cap.
struct StepRule {
  std::vector<int> timesteps;
  std::vector<int> fixed;  // empty for threshold runs
  double theta = 0.0;
  int max_iters = 1;
  long budget = 0;
};

struct RunOutput {
  TensorF samples;
  std::vector<int> iterations;
  std::vector<budget::StepPasses> passes;
  std::vector<solver::FixedPointTrace<float>> traces;
};

Tensor<float> stack_rows(const Tensor<float>& a, const Tensor<float>& b) {
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<float> d(a.data().begin(), a.data().end());
  d.insert(d.end(), b.data().begin(), b.data().end());
  return Tensor<float>(s, std::move(d));
}

Tensor<float> row_slice(const Tensor<float>& a, std::size_t first, std::size_t n) {
  Shape s = a.shape();
  const std::size_t row = a.numel() / s[0];
  s[0] = n;
  return Tensor<float>(s, std::vector<float>(a.data().begin() + std::ptrdiff_t(first * row),
                                             a.data().begin() + std::ptrdiff_t((first + n) * row)));
}

RunOutput run_chains(const net::Network<float>& net, const ParamStore<float>& params,
                     const diffusion::NoiseSchedule& sched, const SampleOptions& opts, std::size_t count,
                     const StepRule& rule) {
  const auto& cfg = net.config();
  const CostModel cost = cost_of(cfg);
  const std::size_t S = rule.timesteps.size();
  diffusion::SamplerConfig sc{opts.sampler, rule.timesteps, opts.guidance, opts.seed};
  sc.validate(sched);

  std::vector<Rng> rngs;
  rngs.reserve(count);
  Shape shape{count};
  for (auto e : cfg.sample_shape()) shape.push_back(e);
  TensorF x(shape);
  const std::size_t row = x.numel() / count;
  for (std::size_t i = 0; i < count; ++i) {
    rngs.emplace_back(diffusion::chain_seed(opts.seed, i));
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t j = 0; j < row; ++j) x[i * row + j] = float(g(rngs.back()));
  }

  std::vector<int> labels(count, net::kNullClass);
  if (cfg.n_classes > 0) {
    for (std::size_t i = 0; i < count; ++i) {
      labels[i] = opts.label >= 0 ? opts.label : int(i % cfg.n_classes);
    }
  }
  const bool guided = cfg.n_classes > 0 && opts.guidance != 1.0;
  std::vector<int> run_labels = labels;
  if (guided) run_labels.insert(run_labels.end(), count, net::kNullClass);
  const std::size_t rows = run_labels.size();

  auto counters = std::make_shared<PassCounters>();
  const Context<float> ctx(params, nullptr, counters);
  RunOutput out;
  std::optional<Var<float>> previous;
  long spent = 0;
  for (std::size_t s = 0; s < S; ++s) {
    const int t = rule.timesteps[s];
    const int t_prev = diffusion::previous_timestep(rule.timesteps, s);
    const long before = counters->block_passes;
    const std::vector<int> ts(rows, t);
    const TensorF x_in = guided ? stack_rows(x, x) : x;

    const Var<float> c = net.embed_conditioning(ctx, ts, run_labels);
    const Var<float> x_pre = net.pre_forward(ctx, net.embed_input(ctx, Var<float>::constant(x_in)));
    const Var<float> x_tilde = net.inject(ctx, x_pre);
    const net::Modulation<float> mod = net.implicit_modulation(ctx, c);
    const solver::StepFn<float> step = [&](const Var<float>& z, int i) { return net.fp_step(ctx, z, x_tilde, mod, i); };
    const Var<float> init = solver::init_solution(int(s), x_tilde, opts.reuse ? previous : std::nullopt);

    solver::SolveResult<float> solved;
    if (rule.fixed.empty()) {
      // Leave at least one iteration for every later step.
      const long later = long(S - s - 1) * cost.step_cost(1);
      const long cap = rule.budget - spent - later - cost.n_pre - cost.n_post;
      if (cap < 1) throw NumericError("adaptive run exhausted the budget at step " + std::to_string(s));
      solved = solver::solve(step, init, solver::SolverConfig::threshold(rule.theta, rule.max_iters), t,
                             int(std::min<long>(cap, rule.max_iters)));
    } else {
      solved = solver::solve(step, init, solver::SolverConfig::fixed(rule.fixed[s]), t);
    }
    if (opts.reuse) previous = solved.x_star;
    const TensorF v_all = net.post_forward(ctx, solved.x_star).value();
    const TensorF v = guided ? diffusion::cfg_combine(row_slice(v_all, 0, count), row_slice(v_all, count, count),
                                                      opts.guidance)
                             : v_all;
    try {
      x = opts.sampler == diffusion::SamplerKind::kDdpm ? diffusion::ddpm_step(sched, x, v, t, t_prev, rngs)
                                                        : diffusion::ddim_step(sched, x, v, t, t_prev);
    } catch (const NumericError& e) {
      throw NumericError("sampling step " + std::to_string(s) + " (timestep " + std::to_string(t) + "): " + e.what());
    }

    const long passes = counters->block_passes - before;
    spent += passes;
    out.iterations.push_back(solved.trace.iterations_used);
    out.passes.push_back({int(s), t, passes});
    out.traces.push_back(std::move(solved.trace));
  }
  out.samples = std::move(x);
  return out;
}

BudgetPlan observed_plan(const StepRule& rule, const RunOutput& run, const CostModel& cost, long budget) {
  BudgetPlan p;
  p.heuristic = "adaptive";
  p.budget = budget;
  p.cost = cost;
  for (std::size_t s = 0; s < rule.timesteps.size(); ++s) {
    p.entries.push_back({int(s), rule.timesteps[s], run.iterations[s]});
  }
  p.total_cost = p.priced_cost();
  return p;
}

}  // namespace

BudgetPlan make_plan(const net::NetworkConfig& cfg, const SampleOptions& opts) {
  const CostModel cost = cost_of(cfg);
  if (opts.plan) return *opts.plan;
  switch (opts.heuristic) {
    case Heuristic::kConstant:
      return budget::plan_constant(opts.budget, opts.iters, cost, cfg.timesteps);
    case Heuristic::kIncreasing:
    case Heuristic::kDecreasing: {
      const std::size_t S = budget::plan_constant(opts.budget, opts.iters, cost, cfg.timesteps).steps();
      return budget::plan_ramp(opts.budget,
                               opts.heuristic == Heuristic::kIncreasing ? budget::Direction::kIncreasing
                                                                        : budget::Direction::kDecreasing,
                               S, cost, cfg.timesteps);
    }
    case Heuristic::kAdaptive:
      break;
  }
  throw UsageError("adaptive plans are found by probing the sampler");
}

SampleResult sample(const net::Network<float>& net, const ParamStore<float>& params,
                    const diffusion::NoiseSchedule& sched, const SampleOptions& opts) {
  if (opts.count == 0) throw UsageError("sample count must be positive");
  if (opts.guidance < 0 || !std::isfinite(opts.guidance)) throw UsageError("guidance scale must be >= 0");
  const auto& cfg = net.config();
  if (opts.label >= 0 && std::size_t(opts.label) >= cfg.n_classes) {
    throw UsageError("class label " + std::to_string(opts.label) + " outside the model's classes");
  }
  const CostModel cost = cost_of(cfg);
  SampleResult r;

  if (opts.heuristic == Heuristic::kAdaptive && !opts.plan) {
    const BudgetPlan shape = budget::plan_constant(opts.budget, opts.iters, cost, cfg.timesteps);
    StepRule rule;
    rule.timesteps = shape.timesteps();
    rule.max_iters = opts.max_iters > 0 ? opts.max_iters : 2 * opts.iters;
    rule.budget = opts.budget;
    const std::size_t probe_n = std::min(opts.count, opts.probe_count);
    const budget::Probe probe = [&](double theta) {
      StepRule pr = rule;
      pr.theta = theta;
      const RunOutput run = run_chains(net, params, sched, opts, probe_n, pr);
      budget::ProbeResult res;
      res.plan = observed_plan(pr, run, cost, opts.budget);
      res.cost = res.plan.total_cost;
      r.probe_cost += res.cost;
      return res;
    };
    // The final run is capped by the remaining budget, so the search only
    // needs the uncapped realized cost to decide feasibility.
    rule.budget = std::numeric_limits<long>::max() / 4;
    const budget::AdaptiveResult found = budget::plan_adaptive(opts.budget, probe, cost);
    r.theta = found.theta;
    r.probes = found.history;
    rule.budget = opts.budget;
    rule.theta = found.theta;
    RunOutput run = run_chains(net, params, sched, opts, opts.count, rule);
    r.plan = observed_plan(rule, run, cost, opts.budget);
    r.samples = std::move(run.samples);
    r.passes = std::move(run.passes);
    r.traces = std::move(run.traces);
  } else {
    r.plan = make_plan(cfg, opts);
    r.plan.validate();
    if (r.plan.cost.n_pre != cost.n_pre || r.plan.cost.n_post != cost.n_post) {
      throw UsageError("plan cost model does not match the network's pre/post depth");
    }
    StepRule rule;
    rule.timesteps = r.plan.timesteps();
    for (const auto& e : r.plan.entries) rule.fixed.push_back(e.iterations);
    RunOutput run = run_chains(net, params, sched, opts, opts.count, rule);
    r.samples = std::move(run.samples);
    r.passes = std::move(run.passes);
    r.traces = std::move(run.traces);
  }
  r.audit = budget::audit_cost(r.plan, r.passes);
  return r;
}

std::vector<double> last_deltas(const SampleResult& r) {
  std::vector<double> out;
  for (const auto& t : r.traces) out.push_back(t.deltas.empty() ? 0.0 : t.deltas.back());
  return out;
}

void write_sample_outputs(const std::string& dir, const SampleResult& r) {
  fs::create_directories(dir);
  write_sample_dir(dir, r.samples);
  {
    std::ofstream f(fs::path(dir) / "plan.csv", std::ios::binary);
    budget::write_plan_csv(f, r.plan);
  }
  {
    std::ofstream f(fs::path(dir) / "trace.csv", std::ios::binary);
    solver::write_trace_csv(f, r.traces);
  }
  {
    std::ofstream f(fs::path(dir) / "audit.csv", std::ios::binary);
    write_csv_row(f, {"step_index", "train_timestep", "planned_passes", "counted_passes"});
    for (std::size_t i = 0; i < r.passes.size(); ++i) {
      const long planned = i < r.plan.entries.size() ? r.plan.cost.step_cost(r.plan.entries[i].iterations) : 0;
      write_csv_row(f, {std::to_string(r.passes[i].step_index), std::to_string(r.passes[i].train_timestep),
                        std::to_string(planned), std::to_string(r.passes[i].passes)});
    }
    write_csv_row(f, {"total", "", std::to_string(r.audit.expected), std::to_string(r.audit.counted)});
  }
  if (!r.probes.empty()) {
    std::ofstream f(fs::path(dir) / "probes.csv", std::ios::binary);
    write_csv_row(f, {"probe", "theta", "cost"});
    for (std::size_t i = 0; i < r.probes.size(); ++i) {
      write_csv_row(f, {std::to_string(i), format_double(r.probes[i].theta), std::to_string(r.probes[i].cost)});
    }
  }
}

}  // namespace fpdm::harness

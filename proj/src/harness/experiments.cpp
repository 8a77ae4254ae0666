#include "fpdm/harness/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "fpdm/format.hpp"
#include "fpdm/harness/csv.hpp"
#include "fpdm/harness/metrics.hpp"
#include "fpdm/harness/train.hpp"

namespace fpdm::harness {
namespace fs = std::filesystem;

MetricBand band(std::vector<double> v) {
  if (v.empty()) throw UsageError("band of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return {med, v.front(), v.back()};
}

namespace {

struct Runner {
  const Checkpoint& ck;
  net::Network<float> net;
  diffusion::NoiseSchedule sched;
  TensorF reference;

  Runner(const Checkpoint& c, std::size_t count)
      : ck(c), net(c.config.model), sched(c.config.schedule.build()), reference(reference_samples(c.config, count)) {}

  SampleOptions base(const SweepOptions& o, std::uint64_t seed) const {
    SampleOptions s;
    s.budget = o.budget;
    s.sampler = o.sampler;
    s.reuse = o.reuse;
    s.guidance = o.guidance;
    s.seed = seed;
    s.count = o.count;
    return s;
  }

  SampleResult run(const SampleOptions& s) const {
    SampleResult r = sample(net, ck.params, sched, s);
    if (!r.audit.ok) throw AuditError(r.audit.message);
    return r;
  }
};

std::ofstream open_csv(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / name, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + (fs::path(dir) / name).string() + "'");
  return f;
}

std::string f2s(double v) { return format_double(v); }

void check_ks(const SweepOptions& o) {
  if (o.ks.empty()) throw UsageError("sweep needs at least one k");
  if (o.seeds.empty()) throw UsageError("sweep needs at least one seed");
}

}  // namespace

std::vector<SmoothingRow> sweep_smoothing(const Checkpoint& ck, const SweepOptions& opts) {
  check_ks(opts);
  const Runner run(ck, opts.count);
  const budget::CostModel cost{int(ck.config.model.n_pre), int(ck.config.model.n_post)};
  for (int k : opts.ks) budget::plan_constant(opts.budget, k, cost, ck.config.model.timesteps);
  std::vector<SmoothingRow> rows;
  for (int k : opts.ks) {
    SmoothingRow row;
    row.k = k;
    for (auto seed : opts.seeds) {
      SampleOptions s = run.base(opts, seed);
      s.iters = k;
      const SampleResult r = run.run(s);
      const EvalResult ev = evaluate(r.samples, run.reference);
      row.S = r.plan.steps();
      row.total_cost = r.plan.total_cost;
      row.swd.push_back(ev.swd);
      row.mmd.push_back(ev.mmd);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_smoothing(const std::string& dir, const std::vector<SmoothingRow>& rows, const SweepOptions& opts) {
  std::ofstream f = open_csv(dir, "smoothing.csv");
  write_csv_row(f, {"k", "S", "total_cost", "swd_median", "swd_min", "swd_max", "mmd_median", "seeds"});
  std::ofstream g = open_csv(dir, "smoothing_runs.csv");
  write_csv_row(g, {"k", "S", "seed", "swd", "mmd"});
  for (const auto& r : rows) {
    const MetricBand s = band(r.swd), m = band(r.mmd);
    write_csv_row(f, {std::to_string(r.k), std::to_string(r.S), std::to_string(r.total_cost), f2s(s.median),
                      f2s(s.lo), f2s(s.hi), f2s(m.median), std::to_string(r.swd.size())});
    for (std::size_t i = 0; i < r.swd.size(); ++i) {
      write_csv_row(g, {std::to_string(r.k), std::to_string(r.S), std::to_string(opts.seeds[i]), f2s(r.swd[i]),
                        f2s(r.mmd[i])});
    }
  }
}

std::vector<ReuseRow> sweep_reuse(const Checkpoint& ck, const SweepOptions& opts) {
  check_ks(opts);
  if (opts.batches < 1) throw UsageError("reuse sweep needs at least one batch");
  const Runner run(ck, opts.count);
  std::vector<ReuseRow> rows;
  for (int k : opts.ks) {
    for (bool reuse : {false, true}) {
      ReuseRow row;
      row.k = k;
      row.reuse = reuse;
      for (auto seed : opts.seeds) {
        SampleOptions s = run.base(opts, seed);
        s.iters = k;
        s.reuse = reuse;
        const SampleResult r = run.run(s);
        row.total_cost = r.plan.total_cost;
        row.swd.push_back(evaluate(r.samples, run.reference).swd);
      }
      for (int b = 0; b < opts.batches; ++b) {
        SampleOptions s = run.base(opts, mix_seed(0xba7c, std::uint64_t(b)));
        s.iters = k;
        s.reuse = reuse;
        s.count = opts.batch_size;
        const SampleResult r = run.run(s);
        if (r.plan.total_cost != row.total_cost) throw AuditError("reuse changed the priced cost");
        row.deltas.push_back(last_deltas(r));
        row.timesteps = r.plan.timesteps();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double tail_delta(const ReuseRow& row, std::size_t tail) {
  std::vector<double> per_batch;
  for (const auto& d : row.deltas) {
    const std::size_t n = std::min(tail, d.size());
    double s = 0.0;
    for (std::size_t i = d.size() - n; i < d.size(); ++i) s += d[i];
    per_batch.push_back(s / double(n));
  }
  return band(per_batch).median;
}

void write_reuse(const std::string& dir, const std::vector<ReuseRow>& rows, const SweepOptions& opts) {
  std::ofstream f = open_csv(dir, "reuse.csv");
  write_csv_row(f, {"k", "reuse", "total_cost", "swd_median", "swd_min", "swd_max", "tail_delta_median", "seeds"});
  std::ofstream g = open_csv(dir, "reuse_deltas.csv");
  write_csv_row(g, {"k", "reuse", "batch", "step_index", "train_timestep", "delta"});
  std::ofstream h = open_csv(dir, "reuse_runs.csv");
  write_csv_row(h, {"k", "reuse", "seed", "swd"});
  for (const auto& r : rows) {
    const MetricBand s = band(r.swd);
    const std::string on = r.reuse ? "on" : "off";
    write_csv_row(f, {std::to_string(r.k), on, std::to_string(r.total_cost), f2s(s.median), f2s(s.lo), f2s(s.hi),
                      f2s(tail_delta(r)), std::to_string(r.swd.size())});
    for (std::size_t b = 0; b < r.deltas.size(); ++b) {
      for (std::size_t i = 0; i < r.deltas[b].size(); ++i) {
        write_csv_row(g, {std::to_string(r.k), on, std::to_string(b), std::to_string(i),
                          std::to_string(r.timesteps[i]), f2s(r.deltas[b][i])});
      }
    }
    for (std::size_t i = 0; i < r.swd.size(); ++i) {
      write_csv_row(h, {std::to_string(r.k), on, std::to_string(opts.seeds[i]), f2s(r.swd[i])});
    }
  }
}

std::vector<HeuristicRow> sweep_heuristics(const Checkpoint& ck, const SweepOptions& opts) {
  check_ks(opts);
  const Runner run(ck, opts.count);
  std::vector<HeuristicRow> rows;
  for (int k : opts.ks) {
    for (auto h : {Heuristic::kConstant, Heuristic::kIncreasing, Heuristic::kDecreasing}) {
      HeuristicRow row;
      row.heuristic = h;
      row.mean_k = k;
      row.audit_ok = true;
      for (auto seed : opts.seeds) {
        SampleOptions s = run.base(opts, seed);
        s.iters = k;
        s.heuristic = h;
        const SampleResult r = run.run(s);
        const EvalResult ev = evaluate(r.samples, run.reference);
        row.S = r.plan.steps();
        row.total_cost = r.plan.total_cost;
        row.audit_ok = row.audit_ok && r.audit.ok;
        row.swd.push_back(ev.swd);
        row.mmd.push_back(ev.mmd);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_heuristics(const std::string& dir, const std::vector<HeuristicRow>& rows, const SweepOptions& opts) {
  std::ofstream f = open_csv(dir, "heuristics.csv");
  write_csv_row(f, {"heuristic", "mean_k", "S", "total_cost", "audit", "swd_median", "swd_min", "swd_max",
                    "mmd_median", "seeds"});
  std::ofstream g = open_csv(dir, "heuristics_runs.csv");
  write_csv_row(g, {"heuristic", "mean_k", "seed", "swd", "mmd"});
  for (const auto& r : rows) {
    const MetricBand s = band(r.swd), m = band(r.mmd);
    const std::string name = heuristic_name(r.heuristic);
    write_csv_row(f, {name, std::to_string(r.mean_k), std::to_string(r.S), std::to_string(r.total_cost),
                      r.audit_ok ? "pass" : "fail", f2s(s.median), f2s(s.lo), f2s(s.hi), f2s(m.median),
                      std::to_string(r.swd.size())});
    for (std::size_t i = 0; i < r.swd.size(); ++i) {
      write_csv_row(g, {name, std::to_string(r.mean_k), std::to_string(opts.seeds[i]), f2s(r.swd[i]),
                        f2s(r.mmd[i])});
    }
  }
}

std::vector<TrainingMethod> training_methods(int mn) {
  return {{"jfb", solver::SjfbConfig::fixed(mn, 1)},
          {"multi-step", solver::SjfbConfig::fixed(mn, mn)},
          {"stochastic", solver::SjfbConfig::stochastic_draws(mn, mn)}};
}

std::vector<TrainingRow> sweep_training_iters(const ExperimentConfig& base, const SweepOptions& opts) {
  if (opts.seeds.empty()) throw UsageError("sweep needs at least one seed");
  if (opts.train_steps < 1) throw UsageError("training sweep needs steps >= 1");
  std::vector<TrainingRow> rows;
  for (const auto& method : training_methods(opts.mn)) {
    for (auto seed : opts.seeds) {
      ExperimentConfig cfg = base;
      cfg.sjfb = method.sjfb;
      cfg.seed = seed;
      cfg.steps = opts.train_steps;
      cfg.log_every = std::max<long>(1, opts.train_steps / 20);
      TrainOptions to;
      to.evaluate = false;
      const TrainResult tr = train(cfg, to);
      TrainingRow row;
      row.method = method.name;
      row.seed = seed;
      const net::Network<float> net(cfg.model);
      row.final_vmse = validation_loss(net, tr.checkpoint.params, cfg, opts.eval_iters, 8192);
      for (const auto& lr : tr.rows) {
        row.curve_steps.push_back(lr.step);
        row.curve.push_back(lr.loss_mean);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_training_iters(const std::string& dir, const std::vector<TrainingRow>& rows,
                          const ExperimentConfig& base) {
  std::ofstream f = open_csv(dir, "training_iters.csv");
  write_csv_row(f, {"method", "seed", "final_vmse", "base_config_hash"});
  std::ofstream g = open_csv(dir, "training_iters_curves.csv");
  write_csv_row(g, {"method", "seed", "step", "loss_mean"});
  const std::string hash = hash_hex(config_hash(base));
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    write_csv_row(f, {r.method, std::to_string(r.seed), f2s(r.final_vmse), hash});
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
      write_csv_row(g, {r.method, std::to_string(r.seed), std::to_string(r.curve_steps[i]), f2s(r.curve[i])});
    }
  }
  std::ofstream h = open_csv(dir, "training_iters_summary.csv");
  write_csv_row(h, {"method", "vmse_median", "vmse_min", "vmse_max", "seeds"});
  for (const auto& m : methods) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.method == m) v.push_back(r.final_vmse);
    }
    const MetricBand b = band(v);
    write_csv_row(h, {m, f2s(b.median), f2s(b.lo), f2s(b.hi), std::to_string(v.size())});
  }
}

}  // namespace fpdm::harness

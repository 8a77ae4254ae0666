#include "fpdm/harness/train.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "fpdm/format.hpp"
#include "fpdm/harness/csv.hpp"
#include "fpdm/harness/metrics.hpp"
#include "fpdm/harness/sample.hpp"

namespace fpdm::harness {
namespace fs = std::filesystem;
namespace o = fpdm::ops;

CountReport count_report(const net::NetworkConfig& cfg, std::size_t batch, int m) {
  if (batch == 0 || m < 1) throw UsageError("count_report needs batch >= 1 and m >= 1");
  const net::Network<float> net(cfg);
  const net::ExplicitBaseline<float> base(cfg, kBaselineBlocks);
  const ParamStore<float> ps = net.init(1);
  const ParamStore<float> bs = base.init(1);

  Rng rng(2);
  Shape shape{batch};
  for (auto e : cfg.sample_shape()) shape.push_back(e);
  solver::TrainBatch<float> b{randn<float>(shape, rng), std::vector<int>(batch, 0),
                              std::vector<int>(batch, net::kNullClass), randn<float>(shape, rng)};
  for (std::size_t i = 0; i < batch; ++i) b.t[i] = int(i % cfg.timesteps);

  CountReport r;
  r.m = m;
  r.fpdm_params = ps.numel();
  r.baseline_params = bs.numel();
  solver::FpdmProblem<float> problem(net, b);
  r.fpdm_tape_nodes = solver::sjfb_run(problem, ps, solver::Draw{0, m}).tape_nodes;
  Tape<float> tape;
  const Context<float> rec(bs, &tape);
  const Var<float> loss = o::mse(base.forward(rec, b.x_t, b.t, b.labels), Var<float>::constant(b.target));
  (void)loss;
  r.baseline_tape_nodes = tape.size();
  return r;
}

void write_counts_csv(std::ostream& os, const CountReport& r) {
  write_csv_row(os, {"quantity", "fpdm", "baseline", "ratio"});
  write_csv_row(os, {"parameters", std::to_string(r.fpdm_params), std::to_string(r.baseline_params),
                     format_double(r.param_ratio())});
  write_csv_row(os, {"tape_nodes_m" + std::to_string(r.m), std::to_string(r.fpdm_tape_nodes),
                     std::to_string(r.baseline_tape_nodes), format_double(r.tape_ratio())});
}

TensorF reference_samples(const ExperimentConfig& cfg, std::size_t count) {
  const Dataset data(cfg.dataset);
  Rng rng(mix_seed(cfg.seed, kStreamReference));
  TensorF x = data.sample(count, rng).x;
  return x;
}

solver::TrainBatch<float> make_train_batch(const ExperimentConfig& cfg, const diffusion::NoiseSchedule& sched,
                                           const DataBatch& data, Rng& noise) {
  const std::size_t n = data.x.dim(0);
  std::uniform_int_distribution<int> tdist(0, int(sched.T) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> t(n), labels = data.labels;
  for (std::size_t i = 0; i < n; ++i) t[i] = tdist(noise);
  const TensorF eps = randn<float>(data.x.shape(), noise);
  for (auto& l : labels) {
    if (u(noise) < cfg.class_dropout) l = net::kNullClass;
  }
  solver::TrainBatch<float> b;
  b.x_t = diffusion::q_sample(sched, data.x, t, eps);
  b.target = diffusion::v_target(sched, data.x, eps, t);
  b.t = std::move(t);
  b.labels = std::move(labels);
  return b;
}

double validation_loss(const net::Network<float>& net, const ParamStore<float>& params, const ExperimentConfig& cfg,
                       int iters, std::size_t count, std::uint64_t seed) {
  const auto sched = cfg.schedule.build();
  const Dataset data(cfg.dataset);
  Rng drng(mix_seed(seed, kStreamData)), nrng(mix_seed(seed, kStreamNoise));
  ExperimentConfig no_drop = cfg;
  no_drop.class_dropout = 0.0;
  const solver::TrainBatch<float> b = make_train_batch(no_drop, sched, data.sample(count, drng), nrng);
  const Context<float> ctx(params);
  const Var<float> v = net.forward(ctx, b.x_t, b.t, b.labels, iters);
  return double(o::mse(v, Var<float>::constant(b.target)).value().item());
}

namespace {

bool grads_finite(const GradMap<float>& g) {
  for (const auto& [name, t] : g) {
    if (!t.all_finite()) return false;
  }
  return true;
}

std::string join_deltas(const std::vector<double>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? " " : "") + format_double(d[i]);
  return s;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const auto sched = cfg.schedule.build();
  const Dataset data(cfg.dataset);
  const net::Network<float> net(cfg.model);
  const std::string hash = hash_hex(config_hash(cfg));
  const std::string seed_str = std::to_string(cfg.seed);

  TrainResult res;
  res.checkpoint.config = cfg;
  res.checkpoint.params = net.init(mix_seed(cfg.seed, kStreamInit));
  ParamStore<float>& ps = res.checkpoint.params;

  const bool files = !opts.out_dir.empty();
  const fs::path out(opts.out_dir);
  std::ofstream metrics, timing;
  if (files) {
    fs::create_directories(out);
    std::ofstream(out / "config.json", std::ios::binary) << config_to_json(cfg) << '\n';
    const CountReport counts = count_report(cfg.model, std::size_t(cfg.batch), cfg.sjfb.stochastic ? cfg.sjfb.M : cfg.sjfb.fixed_m);
    std::ofstream cf(out / "counts.csv", std::ios::binary);
    write_counts_csv(cf, counts);
    if (opts.log) {
      *opts.log << "parameters: fpdm " << counts.fpdm_params << ", " << kBaselineBlocks << "-block baseline "
                << counts.baseline_params << " (ratio " << format_double(counts.param_ratio()) << ")\n";
    }
    if (cfg.reference_count > 0) {
      write_sample_dir((out / "reference").string(), reference_samples(cfg, std::size_t(cfg.reference_count)));
    }
    metrics.open(out / "metrics.csv", std::ios::binary);
    write_csv_row(metrics, {"step", "loss", "loss_mean", "n", "m", "delta_first", "delta_last", "skipped", "swd",
                            "mmd", "seed", "config_hash"});
    timing.open(out / "timing.csv", std::ios::binary);
    write_csv_row(timing, {"step", "elapsed_seconds"});
  }

  Rng data_rng(mix_seed(cfg.seed, kStreamData));
  Rng noise_rng(mix_seed(cfg.seed, kStreamNoise));
  Rng draw_rng(mix_seed(cfg.seed, kStreamDraws));
  const auto t0 = std::chrono::steady_clock::now();
  long adam_steps = 0, streak = 0;
  double window_sum = 0.0;
  long window_n = 0;
  std::string last_problem;

  auto write_row = [&](const LogRow& row, double swd, double mmd) {
    if (!files) return;
    auto opt = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    write_csv_row(metrics, {std::to_string(row.step), format_double(row.loss), format_double(row.loss_mean),
                            std::to_string(row.n), std::to_string(row.m), format_double(row.delta_first),
                            format_double(row.delta_last), std::to_string(row.skipped), opt(swd), opt(mmd),
                            seed_str, hash});
  };

  LogRow last;
  for (long step = 1; step <= cfg.steps; ++step) {
    const solver::TrainBatch<float> batch =
        make_train_batch(cfg, sched, data.sample(std::size_t(cfg.batch), data_rng), noise_rng);
    bool ok = true;
    solver::SjfbResult<float> r;
    try {
      r = solver::sjfb_train_step(net, ps, batch, cfg.sjfb, draw_rng);
      if (!std::isfinite(r.loss)) {
        ok = false;
        last_problem = "non-finite loss";
      } else if (!grads_finite(r.grads)) {
        ok = false;
        last_problem = "non-finite gradient";
      }
    } catch (const DivergenceError& e) {
      ok = false;
      last_problem = std::string(e.what()) + "; residuals: " + join_deltas(e.deltas());
    } catch (const NumericError& e) {
      ok = false;
      last_problem = e.what();
    }
    if (ok) {
      streak = 0;
      adam_step(ps, r.grads, cfg.optimizer, ++adam_steps);
      res.losses.push_back(r.loss);
      window_sum += r.loss;
      ++window_n;
    } else {
      ++res.skipped;
      res.losses.push_back(NAN);
      if (++streak > kMaxBadStreak) {
        throw NumericError("training aborted at step " + std::to_string(step) + " after " + std::to_string(streak) +
                           " consecutive unusable steps; last: " + last_problem);
      }
    }
    if (ok) {
      last.loss = r.loss;
      last.n = r.draw.n;
      last.m = r.draw.m;
      last.delta_first = r.deltas.empty() ? 0.0 : r.deltas.front();
      last.delta_last = r.deltas.empty() ? 0.0 : r.deltas.back();
    }
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      last.step = step;
      last.loss_mean = window_n ? window_sum / double(window_n) : NAN;
      last.skipped = res.skipped;
      window_sum = 0.0;
      window_n = 0;
      res.rows.push_back(last);
      if (step != cfg.steps) write_row(last, NAN, NAN);
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (files) write_csv_row(timing, {std::to_string(step), format_double(el)});
      if (opts.log) {
        *opts.log << "step " << step << " loss " << format_double(last.loss_mean) << " skipped " << res.skipped
                  << std::endl;
      }
    }
    if (files && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      res.checkpoint.step = step;
      save_checkpoint((out / ("checkpoint_" + std::to_string(step) + ".bin")).string(), res.checkpoint);
    }
  }
  res.checkpoint.step = cfg.steps;

  if (opts.evaluate && cfg.reference_count >= int(kMinEvalSamples) && cfg.steps > 0) {
    SampleOptions so;
    so.seed = mix_seed(cfg.seed, kStreamEval);
    so.count = std::size_t(cfg.reference_count);
    const SampleResult sr = sample(net, ps, sched, so);
    const EvalResult ev = evaluate(sr.samples, reference_samples(cfg, std::size_t(cfg.reference_count)));
    res.swd = ev.swd;
    res.mmd = ev.mmd;
  }
  if (!res.rows.empty()) write_row(res.rows.back(), res.swd, res.mmd);
  if (files) save_checkpoint((out / "checkpoint.bin").string(), res.checkpoint);
  return res;
}

}  // namespace fpdm::harness

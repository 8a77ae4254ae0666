#include "fpdm/harness/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "fpdm/format.hpp"
#include "fpdm/harness/csv.hpp"
#include "fpdm/harness/data.hpp"
#include "fpdm/harness/experiments.hpp"
#include "fpdm/harness/metrics.hpp"
#include "fpdm/harness/netcheck.hpp"
#include "fpdm/harness/train.hpp"

namespace fpdm::harness {
namespace fs = std::filesystem;

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

namespace {

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw UsageError("expected a boolean (true|false), got '" + s + "'");
}

template <typename V>
std::vector<V> parse_list(const std::string& s, const char* what) {
  std::vector<V> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(V(v));
    } catch (const std::exception&) {
      throw UsageError(std::string("malformed ") + what + " list '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

struct SampleArgs {
  std::string ckpt, out, heuristic = "constant", reuse = "true", sampler = "ddpm";
  long budget = 280;
  int iters = 4;
  double guidance = 1.0;
  std::uint64_t seed = 0;
  std::size_t count = 1000;
  int label = -1;
};

struct SweepArgs {
  std::string kind, ckpt, out, ks, seeds = "0,1,2", sampler = "ddpm", reuse = "true";
  long budget = 280;
  std::size_t count = 1000;
  int batches = 10;
  std::size_t batch_size = 256;
  long steps = 2000;
  int mn = 6;
  int eval_iters = 8;
};

void write_sweep_record(const std::string& dir, const SweepArgs& a, const Checkpoint& ck) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["sweep"] = a.kind;
  j["checkpoint_config_hash"] = hash_hex(ck.config_hash());
  j["checkpoint_step"] = ck.step;
  j["budget"] = a.budget;
  j["ks"] = a.ks;
  j["seeds"] = a.seeds;
  j["sampler"] = a.sampler;
  j["reuse"] = a.reuse;
  j["count"] = a.count;
  j["batches"] = a.batches;
  j["batch_size"] = a.batch_size;
  j["steps"] = a.steps;
  j["mn"] = a.mn;
  j["eval_iters"] = a.eval_iters;
  std::ofstream(fs::path(dir) / "sweep.json", std::ios::binary) << j.dump(2) << '\n';
}

int do_train(const std::string& config, const std::string& out_dir, std::ostream& out) {
  const ExperimentConfig cfg = load_config(config);
  for (const auto& w : cfg.model.warnings()) out << "warning: " << w << '\n';
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.log = &out;
  const TrainResult r = train(cfg, opts);
  out << "trained " << cfg.steps << " steps (" << r.skipped << " skipped); config hash "
      << hash_hex(config_hash(cfg)) << '\n';
  if (!std::isnan(r.swd)) out << "swd " << format_double(r.swd) << " mmd " << format_double(r.mmd) << '\n';
  return kExitOk;
}

int do_sample(const SampleArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const net::Network<float> net(ck.config.model);
  SampleOptions o;
  o.budget = a.budget;
  o.iters = a.iters;
  o.heuristic = parse_heuristic(a.heuristic);
  o.reuse = parse_bool(a.reuse);
  o.sampler = parse_sampler(a.sampler);
  o.guidance = a.guidance;
  o.seed = a.seed;
  o.count = a.count;
  o.label = a.label;
  const SampleResult r = sample(net, ck.params, ck.config.schedule.build(), o);
  write_sample_outputs(a.out, r);
  out << "plan " << r.plan.heuristic << ": " << r.plan.steps() << " steps, cost " << r.plan.total_cost << " of "
      << a.budget << '\n';
  if (o.heuristic == Heuristic::kAdaptive) {
    out << "theta " << format_double(r.theta) << " after " << r.probes.size() << " probes (probe cost "
        << r.probe_cost << ")\n";
  }
  if (!r.audit.ok) {
    err << "audit failed: " << r.audit.message << '\n';
    return kExitAudit;
  }
  out << "audit: " << r.audit.message << '\n';
  return kExitOk;
}

int do_sweep(const SweepArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  SweepOptions o;
  o.budget = a.budget;
  o.seeds = parse_list<std::uint64_t>(a.seeds, "seed");
  o.count = a.count;
  o.sampler = parse_sampler(a.sampler);
  o.reuse = parse_bool(a.reuse);
  o.batches = a.batches;
  o.batch_size = a.batch_size;
  o.train_steps = a.steps;
  o.mn = a.mn;
  o.eval_iters = a.eval_iters;
  auto ks_or = [&](const char* dflt) {
    return parse_list<int>(a.ks.empty() ? std::string(dflt) : a.ks, "k");
  };
  write_sweep_record(a.out, a, ck);
  if (a.kind == "smoothing") {
    o.ks = ks_or("1,2,4,8,16,26,68");
    const auto rows = sweep_smoothing(ck, o);
    write_smoothing(a.out, rows, o);
    for (const auto& r : rows) {
      out << "k " << r.k << " S " << r.S << " swd " << format_double(band(r.swd).median) << '\n';
    }
  } else if (a.kind == "reuse") {
    o.ks = ks_or("1,2,4,32");
    const auto rows = sweep_reuse(ck, o);
    write_reuse(a.out, rows, o);
    for (const auto& r : rows) {
      out << "k " << r.k << " reuse " << (r.reuse ? "on" : "off") << " swd " << format_double(band(r.swd).median)
          << " tail delta " << format_double(tail_delta(r)) << '\n';
    }
  } else if (a.kind == "heuristics") {
    o.ks = ks_or("2,4,8");
    const auto rows = sweep_heuristics(ck, o);
    write_heuristics(a.out, rows, o);
    for (const auto& r : rows) {
      out << heuristic_name(r.heuristic) << " k " << r.mean_k << " cost " << r.total_cost << " swd "
          << format_double(band(r.swd).median) << '\n';
    }
  } else if (a.kind == "training-iters") {
    const auto rows = sweep_training_iters(ck.config, o);
    write_training_iters(a.out, rows, ck.config);
    for (const auto& r : rows) {
      out << r.method << " seed " << r.seed << " v-mse " << format_double(r.final_vmse) << '\n';
    }
  } else {
    throw UsageError("unknown sweep '" + a.kind + "' (smoothing|reuse|heuristics|training-iters)");
  }
  return kExitOk;
}

int do_eval(const std::string& samples, const std::string& ref, std::ostream& out) {
  const EvalResult r = evaluate(load_sample_dir(samples), load_sample_dir(ref));
  write_csv_row(out, {"swd", "mmd"});
  write_csv_row(out, {format_double(r.swd), format_double(r.mmd)});
  return kExitOk;
}

int do_gradcheck(int seeds, bool f64_only, std::ostream& out) {
  NetCheckOptions o = default_netcheck();
  bool ok = true;
  write_csv_row(out, {"precision", "seed", "max_rel_err", "worst", "tolerance", "result"});
  for (int pass = f64_only ? 1 : 0; pass < 2; ++pass) {
    o.f64 = pass == 1;
    const double tol = o.f64 ? 1e-5 : 1e-2;
    for (int s = 0; s < (o.f64 ? std::min(seeds, 3) : seeds); ++s) {
      const FdReport r = network_gradcheck(o, std::uint64_t(s));
      const bool pass_ok = r.max_rel_err < tol;
      ok = ok && pass_ok;
      write_csv_row(out, {o.f64 ? "float64" : "float32", std::to_string(s), format_double(r.max_rel_err), r.worst,
                          format_double(tol), pass_ok ? "pass" : "fail"});
    }
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fixed-point diffusion models at desk scale"};
  app.require_subcommand(1);

  std::string config, out_dir;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("--config", config, "config file")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Sample under a block-pass budget");
  sample_cmd->add_option("--ckpt", sa.ckpt, "checkpoint")->required();
  sample_cmd->add_option("--budget", sa.budget, "total block forward passes");
  sample_cmd->add_option("--iters", sa.iters, "iterations per step (mean for ramps)");
  sample_cmd->add_option("--heuristic", sa.heuristic, "constant|increasing|decreasing|adaptive");
  sample_cmd->add_option("--reuse", sa.reuse, "reuse the previous step's fixed point");
  sample_cmd->add_option("--sampler", sa.sampler, "ddpm|ddim");
  sample_cmd->add_option("--guidance", sa.guidance, "classifier-free guidance scale");
  sample_cmd->add_option("--seed", sa.seed, "sampling seed");
  sample_cmd->add_option("--count", sa.count, "number of samples");
  sample_cmd->add_option("--label", sa.label, "class of every sample (default: cycle)");
  sample_cmd->add_option("--out", sa.out, "output directory")->required();

  SweepArgs wa;
  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweeps");
  sweep_cmd->add_option("kind", wa.kind, "smoothing|reuse|heuristics|training-iters")->required();
  sweep_cmd->add_option("--ckpt", wa.ckpt, "checkpoint")->required();
  sweep_cmd->add_option("--out", wa.out, "output directory")->required();
  sweep_cmd->add_option("--budget", wa.budget, "total block forward passes");
  sweep_cmd->add_option("--ks", wa.ks, "comma-separated iteration counts");
  sweep_cmd->add_option("--seeds", wa.seeds, "comma-separated seeds");
  sweep_cmd->add_option("--count", wa.count, "samples per metric run");
  sweep_cmd->add_option("--sampler", wa.sampler, "ddpm|ddim");
  sweep_cmd->add_option("--reuse", wa.reuse, "reuse (smoothing and heuristics sweeps)");
  sweep_cmd->add_option("--batches", wa.batches, "reuse sweep: delta-profile batches");
  sweep_cmd->add_option("--batch-size", wa.batch_size, "reuse sweep: chains per batch");
  sweep_cmd->add_option("--steps", wa.steps, "training-iters sweep: steps per model");
  sweep_cmd->add_option("--mn", wa.mn, "training-iters sweep: N = M");
  sweep_cmd->add_option("--eval-iters", wa.eval_iters, "training-iters sweep: validation iterations");

  std::string samples, ref;
  auto* eval_cmd = app.add_subcommand("eval", "Score samples against reference data");
  eval_cmd->add_option("--samples", samples, "sample directory")->required();
  eval_cmd->add_option("--ref", ref, "reference directory")->required();

  int gc_seeds = 20;
  bool gc_f64 = false;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full network");
  grad_cmd->add_option("--seeds", gc_seeds, "float32 seeds");
  grad_cmd->add_flag("--f64-only", gc_f64, "only the float64 check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return do_train(config, out_dir, out);
    if (*sample_cmd) return do_sample(sa, out, err);
    if (*sweep_cmd) return do_sweep(wa, out);
    if (*eval_cmd) return do_eval(samples, ref, out);
    if (*grad_cmd) return do_gradcheck(gc_seeds, gc_f64, out);
  } catch (const AuditError& e) {
    err << "audit failure: " << e.what() << '\n';
    return kExitAudit;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << " (after " << e.iterations_reached() << " iterations)\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace fpdm::harness

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fpdm/harness/checkpoint.hpp"
#include "fpdm/harness/cli.hpp"
#include "fpdm/harness/data.hpp"
#include "fpdm/harness/experiments.hpp"
#include "fpdm/harness/metrics.hpp"
#include "fpdm/harness/train.hpp"

using namespace fpdm;
using namespace fpdm::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fpdm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig toy(long steps) {
  ExperimentConfig c = parse_config(R"({
    "dataset": {"kind": "gaussian-mixture", "modes": 4},
    "model": {"width": 16, "heads": 2, "freq_dim": 16},
    "sjfb": {"mode": "stochastic", "N": 2, "M": 2},
    "batch": 32, "log_every": 10, "reference_count": 500
  })");
  c.steps = steps;
  return c;
}

double mean_tail(const std::vector<double>& v, std::size_t n) {
  double s = 0.0;
  std::size_t c = 0;
  for (std::size_t i = v.size() - std::min(n, v.size()); i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      s += v[i];
      ++c;
    }
  }
  return s / double(c);
}

TensorF gaussian(std::size_t n, double shift, std::uint64_t seed) {
  Rng rng(seed);
  TensorF x = randn<float>({n, 2}, rng);
  for (std::size_t i = 0; i < n; ++i) x[2 * i] += float(shift);
  return x;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "fpdm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  return code;
}

}  // namespace

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(parse_config(R"({"bogus": 1})"), UsageError);
  EXPECT_THROW(parse_config(R"({"model": {"widht": 64}})"), UsageError);
  EXPECT_THROW(parse_config(R"({"dataset": {"kind": "nope"}})"), UsageError);
  EXPECT_THROW(parse_config("{not json"), UsageError);
  EXPECT_THROW(parse_config(R"({"class_dropout": 1.5})"), UsageError);
}

TEST(Config, DerivesModelShapeFromData) {
  const ExperimentConfig a = parse_config(R"({"dataset": {"kind": "gaussian-mixture", "modes": 5, "labels": true}})");
  EXPECT_EQ(a.model.n_classes, 5u);
  EXPECT_EQ(a.model.input, net::InputKind::kPoints);
  const ExperimentConfig b = parse_config(R"({"dataset": {"kind": "spiral"}})");
  EXPECT_EQ(b.model.n_classes, 0u);
}

TEST(Config, JsonRoundTripKeepsHash) {
  const ExperimentConfig a = toy(50);
  const ExperimentConfig b = parse_config(config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  ExperimentConfig c = a;
  c.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(hash_hex(0x1234).size(), 16u);
}

TEST(Data, DatasetsStayInRange) {
  for (const char* kind : {"gaussian-mixture", "checkerboard", "spiral", "point"}) {
    const ExperimentConfig c = parse_config(std::string(R"({"dataset": {"kind": ")") + kind + "\"}}");
    const Dataset d(c.dataset);
    Rng rng(1);
    const DataBatch b = d.sample(2000, rng);
    ASSERT_EQ(b.x.shape(), (Shape{2000, 2}));
    for (std::size_t i = 0; i < b.x.numel(); ++i) {
      EXPECT_GE(b.x[i], -1.0f) << kind;
      EXPECT_LE(b.x[i], 1.0f) << kind;
    }
    for (int l : b.labels) EXPECT_EQ(l, net::kNullClass);
  }
}

TEST(Data, MixtureLabelsMatchNearestMode) {
  const ExperimentConfig c = parse_config(R"({"dataset": {"kind": "gaussian-mixture", "modes": 8, "labels": true}})");
  const Dataset d(c.dataset);
  Rng rng(2);
  const DataBatch b = d.sample(500, rng);
  const auto nearest = d.nearest_mode(b.x);
  int agree = 0;
  for (std::size_t i = 0; i < 500; ++i) agree += nearest[i] == b.labels[i];
  EXPECT_GT(agree, 495);
}

TEST(Data, PgmRoundTrip) {
  const fs::path dir = scratch("pgm");
  std::vector<float> px(64);
  for (std::size_t i = 0; i < 64; ++i) px[i] = float(int(i * 4) - 127) / 127.5f;
  write_pgm((dir / "a.pgm").string(), px, 8, 8);
  std::size_t w = 0, h = 0;
  const auto back = read_pgm((dir / "a.pgm").string(), w, h);
  ASSERT_EQ(w, 8u);
  ASSERT_EQ(h, 8u);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(back[i], px[i], 1.0 / 255.0 + 1e-6);
  std::ofstream((dir / "bad.pgm").string()) << "P2\n8 8\n255\n";
  EXPECT_THROW(read_pgm((dir / "bad.pgm").string(), w, h), UsageError);
}

TEST(Data, ImageDirectoryDataset) {
  const fs::path dir = scratch("images");
  for (int k = 0; k < 3; ++k) {
    std::vector<float> px(64, float(k) / 2.0f - 0.5f);
    char name[32];
    std::snprintf(name, sizeof name, "img_%d.pgm", k);
    write_pgm((dir / name).string(), px, 8, 8);
  }
  ExperimentConfig c = parse_config(R"({"dataset": {"kind": "image-dir", "size": 8, "path": ")" + dir.string() + "\"}}");
  const Dataset d(c.dataset);
  EXPECT_EQ(d.image_count(), 3u);
  Rng rng(3);
  EXPECT_EQ(d.sample(5, rng).x.shape(), (Shape{5, 8, 8}));
  c.dataset.path = (dir / "missing").string();
  EXPECT_THROW(Dataset{c.dataset}, UsageError);
}

TEST(Data, SampleDirRoundTrip) {
  const fs::path dir = scratch("points");
  const TensorF x = gaussian(10, 0.0, 4);
  write_sample_dir(dir.string(), x);
  EXPECT_TRUE(bit_equal(load_sample_dir(dir.string()), x));
}

TEST(Metrics, IdenticalSets) {
  const TensorF a = gaussian(600, 0.0, 5);
  const EvalResult r = evaluate(a, a);
  EXPECT_EQ(r.swd, 0.0);
  EXPECT_LE(r.mmd, 1e-6);
}

TEST(Metrics, ShiftedGaussians) {
  // W1 between N(0,1) and N(5,1) projected on u is 5 |u_1|.
  const TensorF a = gaussian(4000, 0.0, 6), b = gaussian(4000, 5.0, 7);
  Rng rng(kSwdSeed);
  std::normal_distribution<double> z;
  double expect = 0.0;
  for (int p = 0; p < kSwdProjections; ++p) {
    const double u0 = z(rng), u1 = z(rng);
    expect += 5.0 * std::abs(u0) / std::hypot(u0, u1);
  }
  expect /= kSwdProjections;
  const double swd = sliced_wasserstein(a, b);
  EXPECT_NEAR(swd, expect, 0.1 * expect);
  // Closed form over uniform directions: 5 E|u_1| = 10 / pi.
  EXPECT_NEAR(swd, 10.0 / M_PI, 0.1 * 10.0 / M_PI);
  EXPECT_GT(mmd_rbf(a, b), 0.1);
}

TEST(Metrics, PermutationInvariant) {
  TensorF a = gaussian(700, 0.0, 8);
  const TensorF b = gaussian(650, 0.5, 9);
  const EvalResult r1 = evaluate(a, b);
  TensorF p(a.shape());
  for (std::size_t i = 0; i < 700; ++i) {
    p[2 * i] = a[2 * (699 - i)];
    p[2 * i + 1] = a[2 * (699 - i) + 1];
  }
  const EvalResult r2 = evaluate(p, b);
  EXPECT_NEAR(r1.swd, r2.swd, 1e-9);
  EXPECT_NEAR(r1.mmd, r2.mmd, 1e-9);
}

TEST(Metrics, Wasserstein1dOracle) {
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0, 1.0}, {2.0, 3.0}), 2.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0}, {0.0, 1.0}), 0.5);
}

TEST(Metrics, TooFewSamples) {
  EXPECT_THROW(evaluate(gaussian(499, 0.0, 1), gaussian(600, 0.0, 2)), UsageError);
  EXPECT_THROW(evaluate(gaussian(600, 0.0, 1), gaussian(10, 0.0, 2)), UsageError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const fs::path dir = scratch("ckpt");
  const TrainResult r = train(toy(5), {.evaluate = false});
  const std::string p1 = (dir / "a.bin").string(), p2 = (dir / "b.bin").string();
  save_checkpoint(p1, r.checkpoint);
  const Checkpoint back = load_checkpoint(p1);
  save_checkpoint(p2, back);
  std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(back.step, 5);
  EXPECT_EQ(back.config_hash(), r.checkpoint.config_hash());
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path dir = scratch("ckpt_bad");
  EXPECT_THROW(load_checkpoint((dir / "none.bin").string()), UsageError);
  std::ofstream((dir / "junk.bin").string(), std::ios::binary) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint((dir / "junk.bin").string()), UsageError);
}

TEST(Train, DeterministicLossSequence) {
  const TrainResult a = train(toy(30), {.evaluate = false});
  const TrainResult b = train(toy(30), {.evaluate = false});
  ASSERT_EQ(a.losses.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(a.losses[i], b.losses[i]) << i;
  EXPECT_EQ(checkpoint_bytes(a.checkpoint), checkpoint_bytes(b.checkpoint));
}

TEST(Train, WritesArtifacts) {
  const fs::path dir = scratch("train_out");
  ExperimentConfig c = toy(20);
  c.checkpoint_every = 10;
  train(c, {.out_dir = dir.string(), .evaluate = false});
  for (const char* f : {"config.json", "counts.csv", "metrics.csv", "timing.csv", "checkpoint.bin", "checkpoint_10.bin"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // The last step only writes checkpoint.bin.
  EXPECT_FALSE(fs::exists(dir / "checkpoint_20.bin"));
  std::ifstream m((dir / "metrics.csv").string());
  std::string header;
  std::getline(m, header);
  EXPECT_EQ(header, "step,loss,loss_mean,n,m,delta_first,delta_last,skipped,swd,mmd,seed,config_hash");
}

TEST(Train, FullClassDropoutIgnoresLabels) {
  ExperimentConfig c = toy(300);
  c.dataset.labels = true;
  c = parse_config(config_to_json(c));
  c.class_dropout = 1.0;
  const TrainResult r = train(c, {.evaluate = false});
  const net::Network<float> net(c.model);
  const Context<float> ctx(r.checkpoint.params);
  Rng rng(1);
  const TensorF x = randn<float>({16, 2}, rng);
  std::vector<int> t(16);
  for (std::size_t i = 0; i < 16; ++i) t[i] = int(i * 61);
  const TensorF y0 = net.forward(ctx, x, t, std::vector<int>(16, 0), 4).value();
  for (int label = 1; label < 4; ++label) {
    const TensorF y = net.forward(ctx, x, t, std::vector<int>(16, label), 4).value();
    EXPECT_LT(max_abs_diff(y, y0), 1e-5) << label;
  }
}

TEST(Train, PointMassReachesFloor) {
  ExperimentConfig c = parse_config(R"({
    "dataset": {"kind": "point", "center": [0.5, -0.5]},
    "model": {"width": 16, "heads": 2, "freq_dim": 32},
    "sjfb": {"mode": "stochastic", "N": 2, "M": 2},
    "optimizer": {"lr": 3e-3},
    "batch": 512, "steps": 2000, "log_every": 100, "reference_count": 500
  })");
  const TrainResult r = train(c, {.evaluate = false});
  const net::Network<float> net(c.model);
  const double vmse = validation_loss(net, r.checkpoint.params, c, 4, 8192);
  EXPECT_LT(vmse, 1e-3) << "last 100 steps " << mean_tail(r.losses, 100);
}

TEST(Train, TwoModeMixtureLossDropsTenfold) {
  ExperimentConfig c = parse_config(R"({
    "dataset": {"kind": "gaussian-mixture", "modes": 2},
    "model": {"width": 32, "heads": 2, "freq_dim": 32},
    "sjfb": {"mode": "stochastic", "N": 2, "M": 2},
    "batch": 64, "steps": 2000, "log_every": 100, "reference_count": 500
  })");
  const TrainResult r = train(c, {.evaluate = false});
  const double initial = r.losses.front(), final_loss = mean_tail(r.losses, 100);
  EXPECT_LT(final_loss, 0.1 * initial) << "initial " << initial << " final " << final_loss;
}

TEST(Sample, ShapeAuditAndDeterminism) {
  const TrainResult r = train(toy(20), {.evaluate = false});
  const net::Network<float> net(r.checkpoint.config.model);
  const auto sched = r.checkpoint.config.schedule.build();
  SampleOptions o;
  o.sampler = diffusion::SamplerKind::kDdim;
  o.count = 1000;
  o.iters = 8;
  const SampleResult a = sample(net, r.checkpoint.params, sched, o);
  EXPECT_EQ(a.samples.shape(), (Shape{1000, 2}));
  EXPECT_TRUE(a.audit.ok);
  EXPECT_EQ(a.audit.counted, a.plan.total_cost);
  const SampleResult b = sample(net, r.checkpoint.params, sched, o);
  EXPECT_TRUE(bit_equal(a.samples, b.samples));

  // A chain's output does not depend on how many chains run.
  o.count = 10;
  const SampleResult c = sample(net, r.checkpoint.params, sched, o);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(c.samples[i], a.samples[i]);

  o.reuse = false;
  const SampleResult d = sample(net, r.checkpoint.params, sched, o);
  EXPECT_EQ(d.audit.counted, c.audit.counted);

  const fs::path dir = scratch("sample_out");
  write_sample_outputs(dir.string(), a);
  for (const char* f : {"samples.csv", "plan.csv", "trace.csv", "audit.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(load_sample_dir(dir.string()).dim(0), 1000u);
}

TEST(Sample, AdaptiveStaysWithinBudget) {
  const TrainResult r = train(toy(20), {.evaluate = false});
  const net::Network<float> net(r.checkpoint.config.model);
  SampleOptions o;
  o.heuristic = Heuristic::kAdaptive;
  o.count = 64;
  o.probe_count = 32;
  const SampleResult a = sample(net, r.checkpoint.params, r.checkpoint.config.schedule.build(), o);
  EXPECT_TRUE(a.audit.ok);
  EXPECT_LE(a.plan.total_cost, o.budget);
  EXPECT_EQ(a.probes.size(), 9u);
  EXPECT_THROW(make_plan(net.config(), o), UsageError);
}

TEST(Sample, LabelOutOfRange) {
  const TrainResult r = train(toy(5), {.evaluate = false});
  const net::Network<float> net(r.checkpoint.config.model);
  SampleOptions o;
  o.count = 4;
  o.label = 3;
  EXPECT_THROW(sample(net, r.checkpoint.params, r.checkpoint.config.schedule.build(), o), UsageError);
}

TEST(Experiments, SmoothingSweepShape) {
  const TrainResult r = train(toy(20), {.evaluate = false});
  SweepOptions o;
  o.ks = {4};
  o.seeds = {0};
  o.count = 500;
  const auto rows = sweep_smoothing(r.checkpoint, o);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].S, 46u);
  EXPECT_EQ(rows[0].swd.size(), 1u);
  const fs::path dir = scratch("smoothing");
  write_smoothing(dir.string(), rows, o);
  std::ifstream in((dir / "smoothing.csv").string());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(Experiments, HeuristicsRowsAndAudit) {
  const TrainResult r = train(toy(20), {.evaluate = false});
  SweepOptions o;
  o.ks = {2, 4};
  o.seeds = {0};
  o.count = 500;
  const auto rows = sweep_heuristics(r.checkpoint, o);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& row : rows) {
    EXPECT_TRUE(row.audit_ok);
    EXPECT_LE(row.total_cost, o.budget);
  }
}

TEST(Experiments, Band) {
  const MetricBand b = band({3.0, 1.0, 2.0});
  EXPECT_EQ(b.median, 2.0);
  EXPECT_EQ(b.lo, 1.0);
  EXPECT_EQ(b.hi, 3.0);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli({}), kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}), kExitUsage);
  EXPECT_EQ(cli({"sample", "--ckpt", "/nonexistent.bin", "--out", "/tmp/x"}), kExitUsage);
  const fs::path dir = scratch("cli");
  std::ofstream((dir / "cfg.json").string()) << R"({"model": {"wdth": 3}})";
  EXPECT_EQ(cli({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "o").string()}), kExitUsage);
}

TEST(Cli, TrainSampleEval) {
  const fs::path dir = scratch("cli_flow");
  std::ofstream((dir / "cfg.json").string()) << config_to_json(toy(10));
  ASSERT_EQ(cli({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "run").string()}), kExitOk);
  ASSERT_EQ(cli({"sample", "--ckpt", (dir / "run" / "checkpoint.bin").string(), "--count", "600", "--out",
                 (dir / "s").string()}),
            kExitOk);
  std::string text;
  ASSERT_EQ(cli({"eval", "--samples", (dir / "s").string(), "--ref", (dir / "run" / "reference").string()}, &text),
            kExitOk);
  EXPECT_EQ(text.rfind("swd,mmd\n", 0), 0u);
}

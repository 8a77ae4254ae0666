#pragma once

#include <string>
#include <vector>

#include "fpdm/harness/checkpoint.hpp"
#include "fpdm/harness/sample.hpp"

namespace fpdm::harness {

// Shared knobs of the sweeps. Metric runs draw `count` samples per seed and
// score them against the checkpoint's held-out reference set.
struct SweepOptions {
  long budget = 280;
  std::vector<int> ks;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t count = 1000;
  diffusion::SamplerKind sampler = diffusion::SamplerKind::kDdpm;
  bool reuse = true;
  double guidance = 1.0;
  int batches = 10;           // reuse sweep: delta-profile batches
  std::size_t batch_size = 256;
  long train_steps = 2000;    // training-iters sweep
  int mn = 6;                 // training-iters sweep: N = M of the stochastic method
  int eval_iters = 8;         // training-iters sweep: iterations for the validation loss
};

struct MetricBand {
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
MetricBand band(std::vector<double> v);

struct SmoothingRow {
  int k = 0;
  std::size_t S = 0;
  long total_cost = 0;
  std::vector<double> swd;  // per seed
  std::vector<double> mmd;
};
std::vector<SmoothingRow> sweep_smoothing(const Checkpoint& ck, const SweepOptions& opts);
void write_smoothing(const std::string& dir, const std::vector<SmoothingRow>& rows, const SweepOptions& opts);

struct ReuseRow {
  int k = 0;
  bool reuse = false;
  long total_cost = 0;
  std::vector<double> swd;  // per seed
  // [batch][sampled step] last residual.
  std::vector<std::vector<double>> deltas;
  std::vector<int> timesteps;
};
std::vector<ReuseRow> sweep_reuse(const Checkpoint& ck, const SweepOptions& opts);
void write_reuse(const std::string& dir, const std::vector<ReuseRow>& rows, const SweepOptions& opts);
// Median over batches of the mean last residual at the `tail` least noisy steps.
double tail_delta(const ReuseRow& row, std::size_t tail = 3);

struct HeuristicRow {
  Heuristic heuristic = Heuristic::kConstant;
  int mean_k = 0;
  std::size_t S = 0;
  long total_cost = 0;
  bool audit_ok = false;
  std::vector<double> swd;
  std::vector<double> mmd;
};
std::vector<HeuristicRow> sweep_heuristics(const Checkpoint& ck, const SweepOptions& opts);
void write_heuristics(const std::string& dir, const std::vector<HeuristicRow>& rows, const SweepOptions& opts);

struct TrainingMethod {
  std::string name;
  solver::SjfbConfig sjfb;
};
// 1-step JFB (n = mn, m = 1), multi-step (n = mn, m = mn), stochastic (N = M = mn).
std::vector<TrainingMethod> training_methods(int mn);

struct TrainingRow {
  std::string method;
  std::uint64_t seed = 0;
  double final_vmse = 0.0;
  std::vector<double> curve;  // window means at each log row
  std::vector<long> curve_steps;
};
std::vector<TrainingRow> sweep_training_iters(const ExperimentConfig& base, const SweepOptions& opts);
void write_training_iters(const std::string& dir, const std::vector<TrainingRow>& rows,
                          const ExperimentConfig& base);

}  // namespace fpdm::harness

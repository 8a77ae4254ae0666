#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fpdm/harness/checkpoint.hpp"
#include "fpdm/harness/data.hpp"

namespace fpdm::harness {

// RNG stream indices under the experiment seed.
enum Stream : std::uint64_t {
  kStreamData = 0,
  kStreamNoise = 1,
  kStreamDraws = 2,
  kStreamInit = 3,
  kStreamReference = 4,
  kStreamEval = 5,
};

inline constexpr int kMaxBadStreak = 50;
inline constexpr std::size_t kBaselineBlocks = 28;

// Exact parameter counts and with-grad tape sizes of the fixed-point model
// against an explicit stack of kBaselineBlocks blocks at the same width.
struct CountReport {
  std::size_t fpdm_params = 0;
  std::size_t baseline_params = 0;
  std::size_t fpdm_tape_nodes = 0;
  std::size_t baseline_tape_nodes = 0;
  int m = 0;
  double param_ratio() const { return double(fpdm_params) / double(baseline_params); }
  double tape_ratio() const { return double(fpdm_tape_nodes) / double(baseline_tape_nodes); }
};

// Tape nodes are counted for one recorded training step at batch size
// `batch` with m with-grad iterations (no-grad iterations add none).
CountReport count_report(const net::NetworkConfig& cfg, std::size_t batch, int m);
void write_counts_csv(std::ostream& os, const CountReport& r);

struct LogRow {
  long step = 0;
  double loss = 0.0;       // this step's loss
  double loss_mean = 0.0;  // mean over the steps since the previous row
  int n = 0;
  int m = 0;
  double delta_first = 0.0;
  double delta_last = 0.0;
  long skipped = 0;
};

struct TrainOptions {
  std::string out_dir;         // empty: nothing is written
  std::ostream* log = nullptr;  // progress lines
  bool evaluate = true;         // sample and score after the last step
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // per step; NaN for skipped steps
  std::vector<LogRow> rows;
  long skipped = 0;
  double swd = NAN;
  double mmd = NAN;
};

// Adam on MSE(v_pred, v) with S-JFB gradients. Steps whose iteration
// diverges or whose loss or gradient is non-finite are skipped; more than
// kMaxBadStreak in a row abort with NumericError.
TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts = {});

// Held-out data drawn from the experiment's reference stream.
TensorF reference_samples(const ExperimentConfig& cfg, std::size_t count);

// Noisy batch for timestep-uniform v-prediction training.
solver::TrainBatch<float> make_train_batch(const ExperimentConfig& cfg, const diffusion::NoiseSchedule& sched,
                                           const DataBatch& data, Rng& noise);

// Mean v-MSE on a fixed validation set, `iters` fixed-point steps from x_tilde.
double validation_loss(const net::Network<float>& net, const ParamStore<float>& params, const ExperimentConfig& cfg,
                       int iters, std::size_t count = 2048, std::uint64_t seed = 0x7a11);

}  // namespace fpdm::harness

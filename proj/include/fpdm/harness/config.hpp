#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpdm/diffusion/schedule.hpp"
#include "fpdm/net/config.hpp"
#include "fpdm/solver/sjfb.hpp"
#include "fpdm/tensor/params.hpp"

namespace fpdm::harness {

enum class DatasetKind { kGaussianMixture, kCheckerboard, kSpiral, kPoint, kImageDir };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kGaussianMixture;
  int modes = 8;          // gaussian-mixture
  double spread = 0.05;   // per-coordinate std of each mode
  double radius = 0.75;   // modes sit on a circle of this radius
  bool labels = false;    // use the mode index as class label
  std::vector<double> center{0.5, -0.5};  // point
  std::string path;       // image-dir
  int size = 8;           // image-dir, 8 or 16
};

struct ScheduleConfig {
  std::size_t T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool zero_snr = true;
  diffusion::NoiseSchedule build() const;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  net::NetworkConfig model;
  ScheduleConfig schedule;
  solver::SjfbConfig sjfb;
  AdamConfig optimizer;
  int batch = 256;
  long steps = 20000;
  std::uint64_t seed = 0;
  double class_dropout = 0.1;
  long log_every = 100;
  long checkpoint_every = 0;  // 0: final checkpoint only
  int reference_count = 2000;  // held-out samples written next to the checkpoint

  void validate() const;
};

// JSON text <-> config. Unknown keys anywhere are rejected; missing keys
// keep their defaults. The model's input kind, point_dim, image_size and
// n_classes follow from the dataset.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

// FNV-1a 64 of the canonical JSON.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

std::string dataset_kind_name(DatasetKind k);

}  // namespace fpdm::harness

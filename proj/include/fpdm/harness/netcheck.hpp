#pragma once

#include <cstdint>

#include "fpdm/net/config.hpp"
#include "fpdm/tensor/gradcheck.hpp"

namespace fpdm::harness {

struct NetCheckOptions {
  net::NetworkConfig model;  // default: points, width 64, n_pre = n_post = 1
  std::size_t batch = 4;
  int iters = 2;              // fixed-point steps, all recorded
  std::size_t probes = 1000;  // random parameter coordinates per seed
  double jitter = 0.05;       // added to every parameter so no path is dead
  bool f64 = false;           // float64 tape instead of float32
};

NetCheckOptions default_netcheck();

// Finite-difference check of the whole denoiser's v-MSE loss. Float32 runs
// compare against central differences evaluated in float64.
FdReport network_gradcheck(const NetCheckOptions& opts, std::uint64_t seed);

}  // namespace fpdm::harness

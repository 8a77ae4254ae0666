#pragma once

#include <string>

#include "fpdm/harness/config.hpp"
#include "fpdm/net/network.hpp"

namespace fpdm::harness {

// Payload (parameters, then Adam moments) followed by a trailer: "META",
// u32 length, JSON {config, step, config_hash}.
struct Checkpoint {
  ExperimentConfig config;
  ParamStore<float> params;
  long step = 0;

  std::uint64_t config_hash() const { return harness::config_hash(config); }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string checkpoint_bytes(const Checkpoint& ckpt);

}  // namespace fpdm::harness

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fpdm/tensor/tensor.hpp"

namespace fpdm::net {

enum class InputKind { kPoints, kImage };

struct NetworkConfig {
  InputKind input = InputKind::kPoints;
  std::size_t point_dim = 2;   // kPoints: features per sample, one token
  std::size_t image_size = 8;  // kImage: square grayscale side
  std::size_t patch = 2;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t n_pre = 1;
  std::size_t n_post = 1;
  std::size_t n_classes = 0;  // 0 = unconditional; the null row always exists
  std::size_t mlp_ratio = 4;
  std::size_t freq_dim = 256;
  std::size_t timesteps = 1000;
  bool final_norm = true;

  std::size_t token_count() const;
  std::size_t token_dim() const;
  // Per-sample data shape, without the batch axis.
  Shape sample_shape() const;
  std::size_t null_class() const { return n_classes; }

  // Throws UsageError on an invalid configuration.
  void validate() const;
  // Non-fatal notes, e.g. pre/post depths outside {0, 1, 2, 4}.
  std::vector<std::string> warnings() const;
};

}  // namespace fpdm::net

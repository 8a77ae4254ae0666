#include "fpdm/net/config.hpp"

namespace fpdm::net {

std::size_t NetworkConfig::token_count() const {
  if (input == InputKind::kPoints) return 1;
  const std::size_t side = image_size / patch;
  return side * side;
}

std::size_t NetworkConfig::token_dim() const {
  return input == InputKind::kPoints ? point_dim : patch * patch;
}

Shape NetworkConfig::sample_shape() const {
  if (input == InputKind::kPoints) return {point_dim};
  return {image_size, image_size};
}

void NetworkConfig::validate() const {
  if (width == 0 || heads == 0) throw UsageError("network width and heads must be positive");
  if (width % heads != 0) throw UsageError("network width must be divisible by heads");
  if (mlp_ratio == 0) throw UsageError("mlp_ratio must be positive");
  if (freq_dim == 0 || freq_dim % 2 != 0) throw UsageError("freq_dim must be a positive even number");
  if (timesteps < 2) throw UsageError("timesteps must be at least 2");
  if (input == InputKind::kPoints) {
    if (point_dim == 0) throw UsageError("point_dim must be positive");
  } else {
    if (image_size != 8 && image_size != 16) throw UsageError("image_size must be 8 or 16");
    if (patch == 0 || image_size % patch != 0) throw UsageError("patch must divide image_size");
  }
}

std::vector<std::string> NetworkConfig::warnings() const {
  std::vector<std::string> out;
  auto tested = [](std::size_t n) { return n == 0 || n == 1 || n == 2 || n == 4; };
  if (!tested(n_pre)) out.push_back("n_pre=" + std::to_string(n_pre) + " is outside the tested set {0,1,2,4}");
  if (!tested(n_post)) out.push_back("n_post=" + std::to_string(n_post) + " is outside the tested set {0,1,2,4}");
  return out;
}

}  // namespace fpdm::net

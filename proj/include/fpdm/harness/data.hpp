#pragma once

#include <string>
#include <vector>

#include "fpdm/harness/config.hpp"
#include "fpdm/tensor/random.hpp"

namespace fpdm::harness {

struct DataBatch {
  TensorF x;                // [B, 2] or [B, s, s], values in [-1, 1]
  std::vector<int> labels;  // class index or net::kNullClass
};

class Dataset {
 public:
  explicit Dataset(const DatasetConfig& cfg);

  DataBatch sample(std::size_t n, Rng& rng) const;
  Shape sample_shape() const;
  bool is_image() const { return cfg_.kind == DatasetKind::kImageDir; }
  std::size_t n_classes() const;
  const DatasetConfig& config() const { return cfg_; }

  // Gaussian-mixture mode centres, [modes, 2].
  TensorF mode_centers() const;
  // Index of the nearest mode centre for each row of x [N, 2].
  std::vector<int> nearest_mode(const TensorF& x) const;

  std::size_t image_count() const { return images_.size(); }

 private:
  DatasetConfig cfg_;
  std::vector<std::vector<float>> images_;
};

// Binary PGM (P5, maxval 255) <-> values in [-1, 1], linear map.
std::vector<float> read_pgm(const std::string& path, std::size_t& width, std::size_t& height);
void write_pgm(const std::string& path, std::span<const float> values, std::size_t width, std::size_t height);

// 2D point sets as CSV with header x,y.
void write_points_csv(const std::string& path, const TensorF& points);
TensorF read_points_csv(const std::string& path);

// A sample directory holds samples.csv (points) or *.pgm files (images).
// Returns [N, D] rows; images are flattened.
TensorF load_sample_dir(const std::string& dir);
// Writes samples.csv for [N, 2] or sample_00000.pgm ... for [N, s, s].
void write_sample_dir(const std::string& dir, const TensorF& samples);

}  // namespace fpdm::harness

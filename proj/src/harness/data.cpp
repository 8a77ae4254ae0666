#include "fpdm/harness/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fpdm/format.hpp"
#include "fpdm/harness/csv.hpp"
#include "fpdm/net/network.hpp"

namespace fpdm::harness {
namespace fs = std::filesystem;

namespace {

std::vector<fs::path> pgm_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Skips whitespace and '#' comments in a PNM header.
void skip_space(std::istream& in) {
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
}

}  // namespace

Dataset::Dataset(const DatasetConfig& cfg) : cfg_(cfg) {
  if (cfg_.kind != DatasetKind::kImageDir) return;
  const fs::path dir(cfg_.path);
  if (!fs::is_directory(dir)) throw UsageError("dataset path '" + cfg_.path + "' is not a directory");
  for (const auto& p : pgm_files(dir)) {
    std::size_t w = 0, h = 0;
    auto img = read_pgm(p.string(), w, h);
    if (w != std::size_t(cfg_.size) || h != std::size_t(cfg_.size)) {
      throw UsageError("image " + p.string() + " is " + std::to_string(w) + "x" + std::to_string(h) + ", expected " +
                       std::to_string(cfg_.size));
    }
    images_.push_back(std::move(img));
  }
  if (images_.empty()) throw UsageError("dataset path '" + cfg_.path + "' holds no .pgm images");
}

Shape Dataset::sample_shape() const {
  if (is_image()) return {std::size_t(cfg_.size), std::size_t(cfg_.size)};
  return {2};
}

std::size_t Dataset::n_classes() const {
  return cfg_.kind == DatasetKind::kGaussianMixture && cfg_.labels ? std::size_t(cfg_.modes) : 0;
}

TensorF Dataset::mode_centers() const {
  if (cfg_.kind != DatasetKind::kGaussianMixture) throw UsageError("mode centres exist only for gaussian-mixture");
  TensorF c({std::size_t(cfg_.modes), 2});
  for (int j = 0; j < cfg_.modes; ++j) {
    const double a = 2.0 * std::numbers::pi * j / cfg_.modes;
    c[2 * j] = float(cfg_.radius * std::cos(a));
    c[2 * j + 1] = float(cfg_.radius * std::sin(a));
  }
  return c;
}

std::vector<int> Dataset::nearest_mode(const TensorF& x) const {
  const TensorF c = mode_centers();
  if (x.rank() != 2 || x.dim(1) != 2) throw UsageError("nearest_mode expects [N, 2]");
  std::vector<int> out(x.dim(0));
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    double best = INFINITY;
    for (int j = 0; j < cfg_.modes; ++j) {
      const double dx = x[2 * i] - c[2 * j], dy = x[2 * i + 1] - c[2 * j + 1];
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        out[i] = j;
      }
    }
  }
  return out;
}

DataBatch Dataset::sample(std::size_t n, Rng& rng) const {
  if (n == 0) throw UsageError("dataset: batch size must be positive");
  Shape shape{n};
  for (auto e : sample_shape()) shape.push_back(e);
  DataBatch b{TensorF(shape), std::vector<int>(n, net::kNullClass)};
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (cfg_.kind) {
    case DatasetKind::kGaussianMixture: {
      const TensorF c = mode_centers();
      std::uniform_int_distribution<int> mode(0, cfg_.modes - 1);
      for (std::size_t i = 0; i < n; ++i) {
        const int j = mode(rng);
        b.x[2 * i] = float(c[2 * j] + cfg_.spread * gauss(rng));
        b.x[2 * i + 1] = float(c[2 * j + 1] + cfg_.spread * gauss(rng));
        if (cfg_.labels) b.labels[i] = j;
      }
      break;
    }
    case DatasetKind::kCheckerboard: {
      // 4x4 board over [-1, 1]^2, the cells with even i + j are filled.
      std::uniform_int_distribution<int> cell(0, 7);
      for (std::size_t i = 0; i < n; ++i) {
        const int k = cell(rng);
        const int row = k / 2;
        const int col = 2 * (k % 2) + (row % 2);
        b.x[2 * i] = float(-1.0 + 0.5 * (col + unif(rng)));
        b.x[2 * i + 1] = float(-1.0 + 0.5 * (row + unif(rng)));
      }
      break;
    }
    case DatasetKind::kSpiral: {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = std::sqrt(unif(rng));
        const double theta = 3.0 * std::numbers::pi * s;
        const double r = 0.9 * s;
        b.x[2 * i] = float(r * std::cos(theta) + 0.02 * gauss(rng));
        b.x[2 * i + 1] = float(r * std::sin(theta) + 0.02 * gauss(rng));
      }
      break;
    }
    case DatasetKind::kPoint: {
      for (std::size_t i = 0; i < n; ++i) {
        b.x[2 * i] = float(cfg_.center[0]);
        b.x[2 * i + 1] = float(cfg_.center[1]);
      }
      break;
    }
    case DatasetKind::kImageDir: {
      std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
      const std::size_t d = images_[0].size();
      for (std::size_t i = 0; i < n; ++i) {
        const auto& img = images_[pick(rng)];
        std::copy(img.begin(), img.end(), b.x.raw() + i * d);
      }
      break;
    }
  }
  return b;
}

std::vector<float> read_pgm(const std::string& path, std::size_t& width, std::size_t& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5") throw UsageError("image '" + path + "' is not a binary PGM (P5)");
  long w = 0, h = 0, maxval = 0;
  skip_space(in);
  in >> w;
  skip_space(in);
  in >> h;
  skip_space(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255) throw UsageError("image '" + path + "' has an unsupported header");
  in.get();
  std::vector<unsigned char> raw(std::size_t(w * h));
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (in.gcount() != std::streamsize(raw.size())) throw UsageError("image '" + path + "' is truncated");
  width = std::size_t(w);
  height = std::size_t(h);
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = float(raw[i]) / 127.5f - 1.0f;
  return out;
}

void write_pgm(const std::string& path, std::span<const float> values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw UsageError("write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write image '" + path + "'");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<unsigned char> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double p = std::round((double(values[i]) + 1.0) * 127.5);
    raw[i] = static_cast<unsigned char>(std::clamp(p, 0.0, 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
}

void write_points_csv(const std::string& path, const TensorF& points) {
  if (points.rank() != 2 || points.dim(1) != 2) throw UsageError("write_points_csv expects [N, 2]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  write_csv_row(out, {"x", "y"});
  for (std::size_t i = 0; i < points.dim(0); ++i) {
    write_csv_row(out, {format_float(points[2 * i]), format_float(points[2 * i + 1])});
  }
}

TensorF read_points_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != 2 || t.header[0] != "x" || t.header[1] != "y") {
    throw UsageError("'" + path + "' does not have the header x,y");
  }
  if (t.rows.empty()) throw UsageError("'" + path + "' holds no samples");
  TensorF out({t.rows.size(), 2});
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != 2) throw UsageError("'" + path + "' row " + std::to_string(i + 2) + " needs 2 fields");
    for (std::size_t j = 0; j < 2; ++j) {
      try {
        out[2 * i + j] = std::stof(t.rows[i][j]);
      } catch (const std::exception&) {
        throw UsageError("'" + path + "' row " + std::to_string(i + 2) + " is not numeric");
      }
    }
  }
  return out;
}

TensorF load_sample_dir(const std::string& dir) {
  const fs::path d(dir);
  if (!fs::is_directory(d)) throw UsageError("'" + dir + "' is not a directory");
  if (fs::exists(d / "samples.csv")) return read_points_csv((d / "samples.csv").string());
  const auto files = pgm_files(d);
  if (files.empty()) throw UsageError("'" + dir + "' holds neither samples.csv nor .pgm files");
  std::vector<float> all;
  std::size_t dim = 0;
  for (const auto& p : files) {
    std::size_t w = 0, h = 0;
    const auto img = read_pgm(p.string(), w, h);
    if (dim == 0) dim = img.size();
    if (img.size() != dim) throw UsageError("images in '" + dir + "' differ in size");
    all.insert(all.end(), img.begin(), img.end());
  }
  return TensorF({files.size(), dim}, std::move(all));
}

void write_sample_dir(const std::string& dir, const TensorF& samples) {
  fs::create_directories(dir);
  if (samples.rank() == 2) {
    write_points_csv((fs::path(dir) / "samples.csv").string(), samples);
    return;
  }
  if (samples.rank() != 3) throw UsageError("write_sample_dir expects [N, 2] or [N, s, s]");
  const std::size_t h = samples.dim(1), w = samples.dim(2);
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.pgm", i);
    write_pgm((fs::path(dir) / name).string(), std::span<const float>(samples.raw() + i * h * w, h * w), w, h);
  }
}

}  // namespace fpdm::harness

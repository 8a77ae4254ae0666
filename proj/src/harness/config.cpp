#include "fpdm/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fpdm::harness {
using nlohmann::json;

diffusion::NoiseSchedule ScheduleConfig::build() const {
  return diffusion::build_schedule(T, beta_start, beta_end, zero_snr);
}

std::string dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::kGaussianMixture:
      return "gaussian-mixture";
    case DatasetKind::kCheckerboard:
      return "checkerboard";
    case DatasetKind::kSpiral:
      return "spiral";
    case DatasetKind::kPoint:
      return "point";
    case DatasetKind::kImageDir:
      return "image-dir";
  }
  return "?";
}

namespace {

DatasetKind parse_kind(const std::string& s) {
  for (auto k : {DatasetKind::kGaussianMixture, DatasetKind::kCheckerboard, DatasetKind::kSpiral, DatasetKind::kPoint,
                 DatasetKind::kImageDir}) {
    if (dataset_kind_name(k) == s) return k;
  }
  throw UsageError("config: unknown dataset kind '" + s + "'");
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw UsageError("config: unknown key '" + where + "." + it.key() + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<V>();
  } catch (const json::exception&) {
    throw UsageError("config: '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  sjfb.validate();
  if (batch < 1) throw UsageError("config: batch must be >= 1");
  if (steps < 0) throw UsageError("config: steps must be >= 0");
  if (!(class_dropout >= 0 && class_dropout <= 1)) throw UsageError("config: class_dropout must lie in [0, 1]");
  if (!(optimizer.lr > 0)) throw UsageError("config: lr must be > 0");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
    throw UsageError("config: Adam betas must lie in [0, 1)");
  }
  if (log_every < 1) throw UsageError("config: log_every must be >= 1");
  if (checkpoint_every < 0) throw UsageError("config: checkpoint_every must be >= 0");
  if (reference_count < 0) throw UsageError("config: reference_count must be >= 0");
  if (schedule.T != model.timesteps) throw UsageError("config: schedule.T and model timesteps differ");
  switch (dataset.kind) {
    case DatasetKind::kGaussianMixture:
      if (dataset.modes < 1) throw UsageError("config: gaussian-mixture needs modes >= 1");
      if (!(dataset.spread > 0)) throw UsageError("config: gaussian-mixture needs spread > 0");
      break;
    case DatasetKind::kPoint:
      if (dataset.center.size() != 2) throw UsageError("config: point center must have 2 coordinates");
      break;
    case DatasetKind::kImageDir:
      if (dataset.path.empty()) throw UsageError("config: image-dir needs a path");
      if (dataset.size != 8 && dataset.size != 16) throw UsageError("config: image-dir size must be 8 or 16");
      break;
    default:
      break;
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  check_keys(j, "config",
             {"dataset", "model", "schedule", "sjfb", "optimizer", "batch", "steps", "seed", "class_dropout",
              "log_every", "checkpoint_every", "reference_count"});
  if (auto it = j.find("dataset"); it != j.end()) {
    const json& d = *it;
    check_keys(d, "dataset", {"kind", "modes", "spread", "radius", "labels", "center", "path", "size"});
    std::string kind = dataset_kind_name(c.dataset.kind);
    read(d, "kind", kind, "dataset");
    c.dataset.kind = parse_kind(kind);
    read(d, "modes", c.dataset.modes, "dataset");
    read(d, "spread", c.dataset.spread, "dataset");
    read(d, "radius", c.dataset.radius, "dataset");
    read(d, "labels", c.dataset.labels, "dataset");
    read(d, "center", c.dataset.center, "dataset");
    read(d, "path", c.dataset.path, "dataset");
    read(d, "size", c.dataset.size, "dataset");
  }
  if (auto it = j.find("model"); it != j.end()) {
    const json& m = *it;
    check_keys(m, "model", {"width", "heads", "n_pre", "n_post", "mlp_ratio", "freq_dim", "patch", "final_norm"});
    read(m, "width", c.model.width, "model");
    read(m, "heads", c.model.heads, "model");
    read(m, "n_pre", c.model.n_pre, "model");
    read(m, "n_post", c.model.n_post, "model");
    read(m, "mlp_ratio", c.model.mlp_ratio, "model");
    read(m, "freq_dim", c.model.freq_dim, "model");
    read(m, "patch", c.model.patch, "model");
    read(m, "final_norm", c.model.final_norm, "model");
  }
  if (auto it = j.find("schedule"); it != j.end()) {
    const json& s = *it;
    check_keys(s, "schedule", {"T", "beta_start", "beta_end", "zero_snr"});
    read(s, "T", c.schedule.T, "schedule");
    read(s, "beta_start", c.schedule.beta_start, "schedule");
    read(s, "beta_end", c.schedule.beta_end, "schedule");
    read(s, "zero_snr", c.schedule.zero_snr, "schedule");
  }
  if (auto it = j.find("sjfb"); it != j.end()) {
    const json& s = *it;
    check_keys(s, "sjfb", {"mode", "N", "M", "n", "m"});
    std::string mode = "stochastic";
    read(s, "mode", mode, "sjfb");
    if (mode != "stochastic" && mode != "fixed") throw UsageError("config: sjfb.mode must be stochastic or fixed");
    c.sjfb.stochastic = mode == "stochastic";
    read(s, "N", c.sjfb.N, "sjfb");
    read(s, "M", c.sjfb.M, "sjfb");
    read(s, "n", c.sjfb.fixed_n, "sjfb");
    read(s, "m", c.sjfb.fixed_m, "sjfb");
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    const json& o = *it;
    check_keys(o, "optimizer", {"lr", "beta1", "beta2", "eps", "weight_decay"});
    read(o, "lr", c.optimizer.lr, "optimizer");
    read(o, "beta1", c.optimizer.beta1, "optimizer");
    read(o, "beta2", c.optimizer.beta2, "optimizer");
    read(o, "eps", c.optimizer.eps, "optimizer");
    read(o, "weight_decay", c.optimizer.weight_decay, "optimizer");
  }
  read(j, "batch", c.batch, "config");
  read(j, "steps", c.steps, "config");
  read(j, "seed", c.seed, "config");
  read(j, "class_dropout", c.class_dropout, "config");
  read(j, "log_every", c.log_every, "config");
  read(j, "checkpoint_every", c.checkpoint_every, "config");
  read(j, "reference_count", c.reference_count, "config");

  c.model.timesteps = c.schedule.T;
  if (c.dataset.kind == DatasetKind::kImageDir) {
    c.model.input = net::InputKind::kImage;
    c.model.image_size = std::size_t(c.dataset.size);
  } else {
    c.model.input = net::InputKind::kPoints;
    c.model.point_dim = 2;
  }
  c.model.n_classes =
      c.dataset.kind == DatasetKind::kGaussianMixture && c.dataset.labels ? std::size_t(c.dataset.modes) : 0;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"kind", dataset_kind_name(c.dataset.kind)}, {"modes", c.dataset.modes},
                  {"spread", c.dataset.spread},                {"radius", c.dataset.radius},
                  {"labels", c.dataset.labels},                {"center", c.dataset.center},
                  {"path", c.dataset.path},                    {"size", c.dataset.size}};
  j["model"] = {{"width", c.model.width},         {"heads", c.model.heads},         {"n_pre", c.model.n_pre},
                {"n_post", c.model.n_post},       {"mlp_ratio", c.model.mlp_ratio}, {"freq_dim", c.model.freq_dim},
                {"patch", c.model.patch},         {"final_norm", c.model.final_norm}};
  j["schedule"] = {{"T", c.schedule.T},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end},
                   {"zero_snr", c.schedule.zero_snr}};
  j["sjfb"] = {{"mode", c.sjfb.stochastic ? "stochastic" : "fixed"},
               {"N", c.sjfb.N},
               {"M", c.sjfb.M},
               {"n", c.sjfb.fixed_n},
               {"m", c.sjfb.fixed_m}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["batch"] = c.batch;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["class_dropout"] = c.class_dropout;
  j["log_every"] = c.log_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["reference_count"] = c.reference_count;
  return j.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = config_to_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fpdm::harness

#include "fpdm/harness/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fpdm/tensor/serialize.hpp"

namespace fpdm::harness {

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  write_payload(os, store_entries(ckpt.params, true));
  nlohmann::json meta;
  meta["config"] = nlohmann::json::parse(config_to_json(ckpt.config));
  meta["step"] = ckpt.step;
  meta["config_hash"] = hash_hex(ckpt.config_hash());
  const std::string text = meta.dump();
  os.write("META", 4);
  const auto len = std::uint32_t(text.size());
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(text.data(), std::streamsize(text.size()));
  return os.str();
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = checkpoint_bytes(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw UsageError("checkpoint write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path + "'");
  const NamedTensors entries = read_payload(in);
  char magic[4];
  std::uint32_t len = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, "META", 4) != 0 ||
      !in.read(reinterpret_cast<char*>(&len), sizeof len)) {
    throw UsageError("checkpoint '" + path + "' has no META trailer");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw UsageError("checkpoint '" + path + "' META trailer truncated");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("checkpoint '" + path + "' META is not valid JSON: " + e.what());
  }
  Checkpoint ck;
  ck.config = parse_config(meta.at("config").dump());
  ck.step = meta.at("step").get<long>();
  if (meta.at("config_hash").get<std::string>() != hash_hex(ck.config_hash())) {
    throw UsageError("checkpoint '" + path + "' config hash does not match its config");
  }
  const net::Network<float> net(ck.config.model);
  ck.params = net.init(0);
  std::size_t found = 0;
  for (const auto& e : entries) found += ck.params.has(e.first) ? 1 : 0;
  if (found != ck.params.size()) {
    throw UsageError("checkpoint '" + path + "' holds " + std::to_string(found) + " of " +
                     std::to_string(ck.params.size()) + " parameters");
  }
  load_entries(ck.params, entries);
  return ck;
}

}  // namespace fpdm::harness

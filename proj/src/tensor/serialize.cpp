#include "fpdm/tensor/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace fpdm {
namespace {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw UsageError("checkpoint payload truncated");
  return v;
}

}  // namespace

void write_payload(std::ostream& os, const NamedTensors& tensors) {
  os.write("FPDM", 4);
  put<std::uint32_t>(os, kPayloadVersion);
  put<std::uint32_t>(os, std::uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw UsageError("parameter name too long");
    if (t.rank() > 255) throw UsageError("tensor rank too large for payload");
    put<std::uint16_t>(os, std::uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    put<std::uint8_t>(os, std::uint8_t(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint32_t>(os, std::uint32_t(e));
    os.write(reinterpret_cast<const char*>(t.raw()), std::streamsize(t.numel() * sizeof(float)));
  }
  if (!os) throw UsageError("checkpoint payload write failed");
}

NamedTensors read_payload(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FPDM", 4) != 0) throw UsageError("not an FPDM checkpoint payload");
  const auto version = get<std::uint32_t>(is);
  if (version != kPayloadVersion) throw UsageError("unsupported payload version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw UsageError("checkpoint payload truncated");
    const auto rank = get<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint32_t>(is);
    TensorF t(shape);
    if (!is.read(reinterpret_cast<char*>(t.raw()), std::streamsize(t.numel() * sizeof(float)))) {
      throw UsageError("checkpoint payload truncated");
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

NamedTensors store_entries(const ParamStore<float>& store, bool with_moments) {
  NamedTensors out;
  for (const auto& n : store.names()) out.emplace_back(n, store.get(n));
  if (with_moments) {
    for (const auto& [n, t] : store.moments()) out.emplace_back(n, t);
  }
  return out;
}

void load_entries(ParamStore<float>& store, const NamedTensors& entries) {
  for (const auto& [name, t] : entries) {
    if (store.has(name)) {
      store.set(name, t);
    } else if (name.rfind("m/", 0) == 0 || name.rfind("v/", 0) == 0) {
      const std::string base = name.substr(2);
      if (!store.has(base) || store.get(base).shape() != t.shape()) {
        throw UsageError("moment entry does not match a parameter: " + name);
      }
      store.moments()[name] = t;
    } else {
      throw UsageError("checkpoint entry does not match any parameter: " + name);
    }
  }
}

}  // namespace fpdm

#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fpdm/tensor/params.hpp"

namespace fpdm {

inline constexpr std::uint32_t kPayloadVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, TensorF>>;

// "FPDM", u32 version, u32 count, then per tensor: u16 name length, name,
// u8 rank, u32 extents, float32 data; all little-endian.
void write_payload(std::ostream& os, const NamedTensors& tensors);
NamedTensors read_payload(std::istream& is);

// Parameters followed by optimizer moments (stored under their "m/"/"v/" keys).
NamedTensors store_entries(const ParamStore<float>& store, bool with_moments);
// Entries whose name matches a parameter replace its value; "m/" and "v/"
// entries become moments. Unknown names or shape changes are usage errors.
void load_entries(ParamStore<float>& store, const NamedTensors& entries);

}  // namespace fpdm

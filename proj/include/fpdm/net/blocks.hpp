#pragma once

#include <string>

#include "fpdm/net/config.hpp"
#include "fpdm/tensor/ops.hpp"
#include "fpdm/tensor/params.hpp"
#include "fpdm/tensor/random.hpp"

namespace fpdm::net {

enum class Init { kXavier, kZero, kNormal002, kIdentity, kOnes };

template <typename T>
void add_linear(ParamStore<T>& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                Init weight = Init::kXavier, bool bias = true);

// Unconditioned transformer block: pre-norm attention and MLP, each residual
// branch scaled by a learned gate vector that starts at zero.
template <typename T>
void add_plain_block(ParamStore<T>& ps, const std::string& prefix, const NetworkConfig& cfg, Rng& rng);
template <typename T>
Var<T> plain_block(const Context<T>& ctx, const std::string& prefix, const Var<T>& x, const NetworkConfig& cfg);

// Shift/scale/gate vectors for one conditioned block, shaped [B, 1, W].
template <typename T>
struct Modulation {
  Var<T> shift1, scale1, gate1, shift2, scale2, gate2;
};

// Conditioned block with adaptive layer-norm modulation; the modulation
// projection starts at zero, so the block starts as the identity. When skip
// is given it replaces x on the first residual path.
template <typename T>
void add_cond_block(ParamStore<T>& ps, const std::string& prefix, const NetworkConfig& cfg, Rng& rng);
template <typename T>
Modulation<T> modulation(const Context<T>& ctx, const std::string& prefix, const Var<T>& c);
template <typename T>
Var<T> cond_block(const Context<T>& ctx, const std::string& prefix, const Var<T>& x, const Modulation<T>& mod,
                  const NetworkConfig& cfg, const Var<T>* skip = nullptr);

}  // namespace fpdm::net

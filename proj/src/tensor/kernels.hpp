#pragma once

#include <optional>
#include <vector>

#include "fpdm/tensor/tape.hpp"

namespace fpdm::detail {

// Shared by eager evaluation, recording, and tape replay, so all three paths
// produce identical bits for identical inputs.
template <typename T>
Tensor<T> forward_kernel(OpKind op, const OpAttrs<T>& attrs, const std::vector<const Tensor<T>*>& in,
                         std::vector<Tensor<T>>& saved);

// Fills grad_in[i] with the contribution to input i (left empty when input i
// takes no gradient).
template <typename T>
void backward_kernel(OpKind op, const OpAttrs<T>& attrs, const std::vector<const Tensor<T>*>& in,
                     const Tensor<T>& out, const std::vector<Tensor<T>>& saved, const Tensor<T>& grad,
                     std::vector<std::optional<Tensor<T>>>& grad_in);

}  // namespace fpdm::detail

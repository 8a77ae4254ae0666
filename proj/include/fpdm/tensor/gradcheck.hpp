#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "fpdm/tensor/params.hpp"

namespace fpdm {

struct FdOptions {
  double h = 1e-3;
  double eps_abs = 1e-3;
  std::size_t probes = 0;  // 0 probes every coordinate
  std::uint64_t seed = 0;
};

struct FdReport {
  double max_rel_err = 0.0;
  std::size_t probed = 0;
  std::string worst;  // "name[index]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

template <typename T>
using ParamFn = std::function<Var<T>(const Context<T>&)>;
template <typename T>
using InputFn = std::function<Var<T>(const Var<T>&)>;

// max |analytic - central difference| / (|central difference| + eps_abs)
// over the probed parameter coordinates.
template <typename T>
FdReport finite_difference_check(const ParamFn<T>& f, const ParamStore<T>& params, const FdOptions& opts = {});

// Same, with respect to the input tensor of f.
template <typename T>
FdReport finite_difference_check(const InputFn<T>& f, const Tensor<T>& x, const FdOptions& opts = {});

// Shared comparison loop: analytic(t, i) is the tape gradient of coordinate i
// of tensor t, eval(t, i, offset) the loss with that coordinate moved.
FdReport fd_compare(const std::vector<std::string>& names, const std::vector<std::size_t>& sizes,
                    const std::function<double(std::size_t, std::size_t)>& analytic,
                    const std::function<double(std::size_t, std::size_t, double)>& eval, const FdOptions& opts);

// Float32 tape gradient against central differences of the same function
// evaluated in float64, so the reference is not limited by float32 rounding
// of the loss. f must be callable with Context<float> and Context<double>.
template <typename F>
FdReport finite_difference_check_f64_reference(F&& f, const ParamStore<float>& params, const FdOptions& opts = {}) {
  Tape<float> tape;
  const GradMap<float> grads = tape.backward(f(Context<float>(params, &tape)));
  const ParamStore<double> ref = params.template cast<double>();
  ParamStore<double> probe = ref;
  std::vector<std::size_t> sizes;
  for (const auto& n : params.names()) sizes.push_back(params.get(n).numel());
  const auto& names = params.names();
  return fd_compare(
      names, sizes,
      [&](std::size_t t, std::size_t i) {
        auto g = grads.find(names[t]);
        return g == grads.end() ? 0.0 : double(g->second[i]);
      },
      [&](std::size_t t, std::size_t i, double offset) {
        TensorD moved = ref.get(names[t]);
        moved[i] += offset;
        probe.set(names[t], std::move(moved));
        const double v = f(Context<double>(probe)).value().item();
        probe.set(names[t], ref.get(names[t]));
        return v;
      },
      opts);
}

}  // namespace fpdm

#include "fpdm/tensor/gradcheck.hpp"

#include <cmath>
#include <random>

namespace fpdm {
namespace {

struct Coord {
  std::size_t tensor;
  std::size_t index;
};

std::vector<Coord> pick_coords(const std::vector<std::size_t>& sizes, const FdOptions& opts) {
  std::vector<Coord> out;
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (opts.probes == 0 || opts.probes >= total) {
    for (std::size_t t = 0; t < sizes.size(); ++t) {
      for (std::size_t i = 0; i < sizes[t]; ++i) out.push_back({t, i});
    }
    return out;
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (std::size_t p = 0; p < opts.probes; ++p) {
    std::size_t flat = pick(rng);
    std::size_t t = 0;
    while (flat >= sizes[t]) flat -= sizes[t++];
    out.push_back({t, flat});
  }
  return out;
}

}  // namespace

FdReport fd_compare(const std::vector<std::string>& names, const std::vector<std::size_t>& sizes,
                    const std::function<double(std::size_t, std::size_t)>& analytic,
                    const std::function<double(std::size_t, std::size_t, double)>& eval, const FdOptions& opts) {
  if (!(opts.h > 0)) throw UsageError("finite_difference_check: h must be positive");
  FdReport r;
  for (const Coord& c : pick_coords(sizes, opts)) {
    const double numeric = (eval(c.tensor, c.index, opts.h) - eval(c.tensor, c.index, -opts.h)) / (2.0 * opts.h);
    const double a = analytic(c.tensor, c.index);
    const double err = std::abs(a - numeric) / (std::abs(numeric) + opts.eps_abs);
    ++r.probed;
    if (err > r.max_rel_err || r.worst.empty()) {
      r.max_rel_err = std::max(r.max_rel_err, err);
      r.worst = names[c.tensor] + "[" + std::to_string(c.index) + "]";
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
  }
  return r;
}

template <typename T>
FdReport finite_difference_check(const ParamFn<T>& f, const ParamStore<T>& params, const FdOptions& opts) {
  Tape<T> tape;
  const GradMap<T> grads = tape.backward(f(Context<T>(params, &tape)));
  std::vector<std::size_t> sizes;
  for (const auto& n : params.names()) sizes.push_back(params.get(n).numel());
  const auto& names = params.names();
  ParamStore<T> probe = params;
  return fd_compare(
      names, sizes,
      [&](std::size_t t, std::size_t i) {
        auto g = grads.find(names[t]);
        return g == grads.end() ? 0.0 : double(g->second[i]);
      },
      [&](std::size_t t, std::size_t i, double offset) {
        const Tensor<T>& base = params.get(names[t]);
        Tensor<T> moved = base;
        moved[i] = T(double(base[i]) + offset);
        probe.set(names[t], std::move(moved));
        const double v = double(f(Context<T>(probe)).value().item());
        probe.set(names[t], base);
        return v;
      },
      opts);
}

template <typename T>
FdReport finite_difference_check(const InputFn<T>& f, const Tensor<T>& x, const FdOptions& opts) {
  Tape<T> tape;
  const Var<T> xv = tape.variable(x);
  const Tensor<T> grad = tape.backward_full(f(xv)).wrt(xv);
  return fd_compare(
      {"x"}, {x.numel()}, [&](std::size_t, std::size_t i) { return double(grad[i]); },
      [&](std::size_t, std::size_t i, double offset) {
        Tensor<T> moved = x;
        moved[i] = T(double(x[i]) + offset);
        return double(f(Var<T>::constant(std::move(moved))).value().item());
      },
      opts);
}

template FdReport finite_difference_check(const ParamFn<float>&, const ParamStore<float>&, const FdOptions&);
template FdReport finite_difference_check(const ParamFn<double>&, const ParamStore<double>&, const FdOptions&);
template FdReport finite_difference_check(const InputFn<float>&, const Tensor<float>&, const FdOptions&);
template FdReport finite_difference_check(const InputFn<double>&, const Tensor<double>&, const FdOptions&);

}  // namespace fpdm

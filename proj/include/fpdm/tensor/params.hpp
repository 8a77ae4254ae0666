#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fpdm/tensor/tape.hpp"

namespace fpdm {

// Named parameters in creation order. Values are shared immutable tensors;
// set() swaps in a new tensor so earlier readers keep a consistent snapshot.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> value);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const { return *ptr(name); }
  const std::shared_ptr<const Tensor<T>>& ptr(const std::string& name) const;
  // Replaces the value; the shape must not change.
  void set(const std::string& name, Tensor<T> value);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t numel() const;
  // Total element count over parameters whose name starts with prefix.
  std::size_t numel(const std::string& prefix) const;

  // Optimizer state, keyed by parameter name.
  std::map<std::string, Tensor<T>>& moments() { return moments_; }
  const std::map<std::string, Tensor<T>>& moments() const { return moments_; }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& n : names_) out.add(n, get(n).template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::shared_ptr<const Tensor<T>>> values_;
  std::map<std::string, Tensor<T>> moments_;
};

struct PassCounters {
  long block_passes = 0;
  long inject_calls = 0;
};

// Evaluation context handed to every network function. With a tape the
// primitives are recorded (with-grad); without one nothing is recorded.
template <typename T>
class Context {
 public:
  using value_type = T;

  explicit Context(const ParamStore<T>& params, Tape<T>* tape = nullptr,
                   std::shared_ptr<PassCounters> counters = std::make_shared<PassCounters>())
      : params_(&params), tape_(tape), counters_(std::move(counters)) {}

  Var<T> param(const std::string& name) const;
  bool recording() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  const ParamStore<T>& params() const { return *params_; }

  // Same parameters and counters, different recording mode.
  Context with_tape(Tape<T>* tape) const { return Context(*params_, tape, counters_); }
  Context no_grad() const { return Context(*params_, nullptr, counters_); }

  PassCounters& counters() const { return *counters_; }

 private:
  const ParamStore<T>* params_;
  Tape<T>* tape_;
  std::shared_ptr<PassCounters> counters_;
};

// Adam with bias correction; moments live in the store as "m/<name>", "v/<name>".
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

void adam_step(ParamStore<float>& params, const GradMap<float>& grads, const AdamConfig& cfg, long step);

}  // namespace fpdm

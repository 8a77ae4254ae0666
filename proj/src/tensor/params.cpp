#include "fpdm/tensor/params.hpp"

#include <cmath>

namespace fpdm {

template <typename T>
void ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (name.empty()) throw UsageError("parameter name must not be empty");
  if (has(name)) throw UsageError("duplicate parameter name: " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::make_shared<const Tensor<T>>(std::move(value)));
}

template <typename T>
const std::shared_ptr<const Tensor<T>>& ParamStore<T>::ptr(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter: " + name);
  return values_[it->second];
}

template <typename T>
void ParamStore<T>::set(const std::string& name, Tensor<T> value) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter: " + name);
  if (values_[it->second]->shape() != value.shape()) {
    throw UsageError("parameter " + name + " has shape " + shape_str(values_[it->second]->shape()) +
                     ", cannot assign " + shape_str(value.shape()));
  }
  values_[it->second] = std::make_shared<const Tensor<T>>(std::move(value));
}

template <typename T>
std::size_t ParamStore<T>::numel() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v->numel();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::numel(const std::string& prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].compare(0, prefix.size(), prefix) == 0) n += values_[i]->numel();
  }
  return n;
}

template <typename T>
Var<T> Context<T>::param(const std::string& name) const {
  const auto& p = params_->ptr(name);
  if (tape_) return tape_->param(name, p);
  return Var<T>::constant(p);
}

void adam_step(ParamStore<float>& params, const GradMap<float>& grads, const AdamConfig& cfg, long step) {
  if (step < 1) throw UsageError("adam_step: step counter starts at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  auto& mom = params.moments();
  for (const auto& name : params.names()) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    const Tensor<float>& p = params.get(name);
    auto& m = mom.try_emplace("m/" + name, p.shape()).first->second;
    auto& v = mom.try_emplace("v/" + name, p.shape()).first->second;
    Tensor<float> next = p;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g->second[i];
      if (cfg.weight_decay != 0.0) gi += cfg.weight_decay * double(p[i]);
      m[i] = float(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi);
      v[i] = float(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi);
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      next[i] = float(double(p[i]) - cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
    }
    params.set(name, std::move(next));
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Context<float>;
template class Context<double>;

}  // namespace fpdm

#include "fpdm/tensor/tape.hpp"

#include <sstream>

#include "kernels.hpp"

namespace fpdm {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kBatchMatMul: return "bmm";
    case OpKind::kReshape: return "reshape";
    case OpKind::kPermute: return "permute";
    case OpKind::kSliceLast: return "slice_last";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSilu: return "silu";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kMse: return "mse";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kCustom: return "custom";
  }
  return "?";
}

template <typename T>
Tensor<T> Gradients<T>::wrt(const Var<T>& v) const {
  if (v.on_tape() && v.node() < nodes.size() && nodes[v.node()]) return *nodes[v.node()];
  return Tensor<T>(v.shape());
}

template <typename T>
Var<T> Tape<T>::param(const std::string& name, std::shared_ptr<const Tensor<T>> value) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) {
    return Var<T>(nodes_[it->second].value, this, it->second);
  }
  Node n;
  n.op = OpKind::kLeaf;
  n.value = std::move(value);
  n.param_name = name;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(name, nodes_.size() - 1);
  return Var<T>(nodes_.back().value, this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.op = OpKind::kLeaf;
  n.value = std::make_shared<const Tensor<T>>(std::move(value));
  n.is_variable = true;
  nodes_.push_back(std::move(n));
  return Var<T>(nodes_.back().value, this, nodes_.size() - 1);
}

template <typename T>
std::size_t Tape<T>::constant_node(const std::shared_ptr<const Tensor<T>>& value) {
  if (auto it = constant_nodes_.find(value.get()); it != constant_nodes_.end()) return it->second;
  Node n;
  n.op = OpKind::kConstant;
  n.value = value;
  nodes_.push_back(std::move(n));
  constant_nodes_.emplace(value.get(), nodes_.size() - 1);
  return nodes_.size() - 1;
}

template <typename T>
Var<T> Tape<T>::record(OpKind op, OpAttrs<T> attrs, const std::vector<const Var<T>*>& inputs,
                       std::shared_ptr<const Tensor<T>> value, std::vector<Tensor<T>> saved) {
  Node n;
  n.op = op;
  n.attrs = std::move(attrs);
  n.inputs.reserve(inputs.size());
  for (const Var<T>* in : inputs) {
    if (in->on_tape()) {
      if (in->tape() != this) throw UsageError("primitive mixes values from two different tapes");
      n.inputs.push_back(in->node());
    } else {
      n.inputs.push_back(constant_node(in->value_ptr()));
    }
  }
  n.value = std::move(value);
  n.saved = std::move(saved);
  nodes_.push_back(std::move(n));
  return Var<T>(nodes_.back().value, this, nodes_.size() - 1);
}

template <typename T>
Gradients<T> Tape<T>::run_backward(const Var<T>& loss, bool keep_interior) const {
  if (!loss.on_tape() || loss.tape() != this || loss.node() >= nodes_.size()) {
    throw UsageError("backward: loss was not produced on this tape");
  }
  if (loss.numel() != 1) throw UsageError("backward: loss must be a scalar, got " + shape_str(loss.shape()));

  Gradients<T> out;
  out.nodes.assign(nodes_.size(), std::nullopt);
  out.nodes[loss.node()] = Tensor<T>(loss.shape(), T(1));

  std::vector<const Tensor<T>*> ins;
  std::vector<std::optional<Tensor<T>>> grad_in;
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!out.nodes[i] || n.op == OpKind::kLeaf || n.op == OpKind::kConstant) continue;
    ins.clear();
    for (std::size_t j : n.inputs) ins.push_back(nodes_[j].value.get());
    detail::backward_kernel(n.op, n.attrs, ins, *n.value, n.saved, *out.nodes[i], grad_in);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (!grad_in[k]) continue;
      const std::size_t j = n.inputs[k];
      if (nodes_[j].op == OpKind::kConstant) continue;
      if (!out.nodes[j]) {
        out.nodes[j] = std::move(*grad_in[k]);
      } else {
        T* dst = out.nodes[j]->raw();
        const T* src = grad_in[k]->raw();
        for (std::size_t e = 0; e < out.nodes[j]->numel(); ++e) dst[e] += src[e];
      }
    }
    if (!keep_interior) out.nodes[i].reset();
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op != OpKind::kLeaf || n.param_name.empty()) continue;
    out.params.emplace(n.param_name, out.nodes[i] ? *out.nodes[i] : Tensor<T>(n.value->shape()));
  }
  return out;
}

template <typename T>
Gradients<T> Tape<T>::backward_full(const Var<T>& loss) const {
  return run_backward(loss, true);
}

template <typename T>
GradMap<T> Tape<T>::backward(const Var<T>& loss) const {
  return run_backward(loss, false).params;
}

template <typename T>
bool Tape<T>::replay_matches() const {
  std::vector<const Tensor<T>*> ins;
  for (const Node& n : nodes_) {
    if (n.op == OpKind::kLeaf || n.op == OpKind::kConstant) continue;
    ins.clear();
    for (std::size_t j : n.inputs) ins.push_back(nodes_[j].value.get());
    std::vector<Tensor<T>> saved;
    const Tensor<T> again = detail::forward_kernel(n.op, n.attrs, ins, saved);
    if (!bit_equal(again, *n.value)) return false;
  }
  return true;
}

template <typename T>
std::size_t Tape<T>::count(OpKind op) const {
  std::size_t c = 0;
  for (const Node& n : nodes_) c += (n.op == op);
  return c;
}

template <typename T>
std::size_t Tape<T>::bytes() const {
  std::size_t b = 0;
  for (const Node& n : nodes_) {
    if (n.op == OpKind::kLeaf || n.op == OpKind::kConstant) continue;
    b += n.value->numel() * sizeof(T);
    for (const auto& s : n.saved) b += s.numel() * sizeof(T);
  }
  return b;
}

template <typename T>
GradMap<T> merge_gradients(const std::vector<GradMap<T>>& parts) {
  GradMap<T> out;
  for (const auto& part : parts) {
    for (const auto& [name, g] : part) {
      auto it = out.find(name);
      if (it == out.end()) {
        out.emplace(name, g);
        continue;
      }
      if (it->second.shape() != g.shape()) throw UsageError("merge_gradients: shape mismatch for " + name);
      for (std::size_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
    }
  }
  return out;
}

template struct Gradients<float>;
template struct Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template GradMap<float> merge_gradients(const std::vector<GradMap<float>>&);
template GradMap<double> merge_gradients(const std::vector<GradMap<double>>&);

}  // namespace fpdm

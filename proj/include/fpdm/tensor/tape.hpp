#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fpdm/tensor/tensor.hpp"

namespace fpdm {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kMatMul,
  kBatchMatMul,
  kReshape,
  kPermute,
  kSliceLast,
  kGelu,
  kSilu,
  kLayerNorm,
  kSoftmax,
  kSum,
  kMean,
  kMse,
  kGatherRows,
  kCustom,
};

const char* op_name(OpKind op);

// User-defined unary primitive: forward plus vector-Jacobian product.
template <typename T>
struct CustomOp {
  std::string name;
  std::function<Tensor<T>(const Tensor<T>& x)> forward;
  std::function<Tensor<T>(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& grad_y)> vjp;
};

template <typename T>
struct OpAttrs {
  double scalar = 0.0;
  bool flag = false;
  std::vector<std::size_t> ints;
  std::shared_ptr<const CustomOp<T>> custom;
};

template <typename T>
class Tape;

// A value plus, when it was produced under recording, its node on a tape.
// Values are immutable and shared; copying a Var never copies data.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value) { return Var(std::make_shared<const Tensor<T>>(std::move(value))); }
  static Var constant(std::shared_ptr<const Tensor<T>> value) { return Var(std::move(value)); }

  const Tensor<T>& value() const { return *value_; }
  const std::shared_ptr<const Tensor<T>>& value_ptr() const { return value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t numel() const { return value_->numel(); }

  bool valid() const { return value_ != nullptr; }
  bool on_tape() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  std::size_t node() const { return node_; }

 private:
  friend class Tape<T>;
  explicit Var(std::shared_ptr<const Tensor<T>> v) : value_(std::move(v)) {}
  Var(std::shared_ptr<const Tensor<T>> v, Tape<T>* tape, std::size_t node)
      : value_(std::move(v)), tape_(tape), node_(node) {}

  std::shared_ptr<const Tensor<T>> value_;
  Tape<T>* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Drops the tape link, keeping the (shared) value.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return Var<T>::constant(v.value_ptr());
}

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

template <typename T>
struct Gradients {
  GradMap<T> params;
  std::vector<std::optional<Tensor<T>>> nodes;

  // Gradient with respect to a recorded value; zeros when the loss does not depend on it.
  Tensor<T> wrt(const Var<T>& v) const;
};

// Append-only record of primitive applications. Inputs always precede their
// consumers, so reverse insertion order is a reverse topological order.
template <typename T>
class Tape {
 public:
  struct Node {
    OpKind op = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    OpAttrs<T> attrs;
    std::shared_ptr<const Tensor<T>> value;
    std::vector<Tensor<T>> saved;
    std::string param_name;
    bool is_variable = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Named parameter leaf; repeated requests for one name return the same node.
  Var<T> param(const std::string& name, std::shared_ptr<const Tensor<T>> value);
  // Unnamed leaf that receives a gradient (inputs under test).
  Var<T> variable(Tensor<T> value);

  // Used by the primitive wrappers in ops.hpp.
  Var<T> record(OpKind op, OpAttrs<T> attrs, const std::vector<const Var<T>*>& inputs,
                std::shared_ptr<const Tensor<T>> value, std::vector<Tensor<T>> saved);

  GradMap<T> backward(const Var<T>& loss) const;
  // Also keeps gradients of every interior node.
  Gradients<T> backward_full(const Var<T>& loss) const;

  // Re-executes every recorded primitive from its recorded inputs and
  // compares against the recorded output bit for bit.
  bool replay_matches() const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t count(OpKind op) const;
  // Bytes held in node values and saved activations.
  std::size_t bytes() const;
  const Node& node(std::size_t i) const { return nodes_.at(i); }

 private:
  std::size_t constant_node(const std::shared_ptr<const Tensor<T>>& value);
  Gradients<T> run_backward(const Var<T>& loss, bool keep_interior) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> constant_nodes_;
};

template <typename T>
GradMap<T> merge_gradients(const std::vector<GradMap<T>>& parts);

}  // namespace fpdm

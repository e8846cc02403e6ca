#include "plab/autodiff/tape.hpp"

#include "plab/util/error.hpp"

namespace plab::ad {

const Tensor& Var::value() const { return tape->value(*this); }

Tensor GradientMap::operator[](Var v) const {
  const auto i = static_cast<std::size_t>(v.id);
  if (i < grads_.size() && grads_[i].size() > 0) return grads_[i];
  return Tensor(shapes_.at(i), 0.0);
}

bool GradientMap::reached(Var v) const {
  const auto i = static_cast<std::size_t>(v.id);
  return i < grads_.size() && grads_[i].size() > 0;
}

GradAccumulator::GradAccumulator(const Tape& tape) : tape_(tape), grads_(tape.size()) {}

Tensor& GradAccumulator::at(Var v) {
  auto& g = grads_[static_cast<std::size_t>(v.id)];
  if (g.size() == 0) g = Tensor(tape_.value(v).shape(), 0.0);
  return g;
}

bool GradAccumulator::wants(Var v) const { return tape_.needs_grad(v); }

Var Tape::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.needs_grad = record_ && value.requires_grad();
  n.owned = std::move(value);
  n.op = "leaf";
  return add_node(std::move(n));
}

Var Tape::borrow(const Tensor& external, bool requires_grad) {
  Node n;
  n.borrowed = &external;
  n.needs_grad = record_ && requires_grad;
  n.op = "param";
  return add_node(std::move(n));
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::watch(Var v) {
  if (!record_) return v;
  Node n;
  n.owned = value(v);
  n.needs_grad = true;
  n.op = "watch";
  if (needs_grad(v)) {
    n.backward = [v](const Tape&, const Tensor& g, GradAccumulator& acc) {
      auto& gv = acc.at(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    };
  }
  return add_node(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(v.id));
  return n.borrowed ? *n.borrowed : n.owned;
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward), op);
}

Var Tape::push(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op) {
  value.debug_check_finite(op);
  Node n;
  n.owned = std::move(value);
  n.op = op;
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape != this) throw ContractError(std::string("op ") + op + " mixes vars from different tapes");
      if (nodes_[static_cast<std::size_t>(in.id)].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  return add_node(std::move(n));
}

GradientMap Tape::backward(Var loss) const {
  if (!record_) throw ContractError("no tape: computation was recorded without gradient capture");
  if (loss.tape != this) throw ContractError("loss belongs to a different tape");
  const Tensor& lv = value(loss);
  if (lv.size() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(lv.shape()));

  GradAccumulator acc(*this);
  const auto root = static_cast<std::size_t>(loss.id);
  if (nodes_[root].needs_grad) {
    acc.at(loss).fill(1.0);
    for (std::size_t k = root + 1; k-- > 0;) {
      const Node& n = nodes_[k];
      if (!n.backward) continue;
      auto& g = acc.grads_[k];
      if (g.size() == 0) continue;
      n.backward(*this, g, acc);
    }
  }
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back((n.borrowed ? *n.borrowed : n.owned).shape());
  // Keep gradients only for nodes that track them.
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    if (!nodes_[k].needs_grad) acc.grads_[k] = Tensor();
  }
  return GradientMap(std::move(acc.grads_), std::move(shapes));
}

}  // namespace plab::ad

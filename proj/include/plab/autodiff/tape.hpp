#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "plab/autodiff/tensor.hpp"

namespace plab::ad {

class Tape;

// Handle to a node recorded on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const noexcept { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

// Gradients indexed by node id; nodes the loss never reached read as zeros.
class GradientMap {
 public:
  GradientMap() = default;
  GradientMap(std::vector<Tensor> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  Tensor operator[](Var v) const;
  bool reached(Var v) const;

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

// Lazily-allocated gradient accumulators handed to backward rules.
class GradAccumulator {
 public:
  explicit GradAccumulator(const Tape& tape);
  // Zero-initialized on first touch.
  Tensor& at(Var v);
  bool wants(Var v) const;

 private:
  friend class Tape;
  const Tape& tape_;
  std::vector<Tensor> grads_;
};

// Records a computation as it executes. Nodes are appended in evaluation
// order, so the node list is already a topological order of the graph.
// Single-threaded: one tape per sequence.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tape&, const Tensor& grad_out, GradAccumulator&)>;

  // record == false evaluates ops without keeping backward rules.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  // Owned leaf; gradients are tracked iff value.requires_grad().
  Var leaf(Tensor value);
  // Borrowed leaf (model parameters): no copy; `external` must outlive the tape.
  Var borrow(const Tensor& external, bool requires_grad);
  Var constant(Tensor value);

  // Identity node that always tracks gradients, even when nothing upstream
  // does. Gradients still flow to `v` when it tracks them.
  Var watch(Var v);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations. The backward rule is dropped when nothing
  // upstream needs a gradient or the tape is not recording.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op);
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op);

  // Reverse sweep from a scalar loss. Throws ContractError for non-scalar
  // loss or when the tape did not record backward rules.
  GradientMap backward(Var loss) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  Var add_node(Node node);

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace plab::ad

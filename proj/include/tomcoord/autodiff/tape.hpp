#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tomcoord/autodiff/tensor.hpp"

namespace tomcoord::ad {

class Tape;

// Handle to a value. A Var is either a constant (no gradient flows through
// it) or a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  static Var constant(Tensor value);

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool defined() const { return value_ != nullptr; }
  bool is_constant() const { return node_ < 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Vector-Jacobian product of one recorded op: given the op output and the
// gradient flowing into it, returns one gradient per input (undefined Var for
// inputs that take no gradient). Written in terms of the ops themselves, so
// the backward pass can be recorded and differentiated again.
using VjpFn = std::function<std::vector<Var>(const Var& out, const Var& grad)>;

// Records primitive ops in execution order. Node ids increase with
// recording order, so the node list is always topologically sorted.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that gradients can be taken with respect to.
  Var variable(Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, VjpFn vjp);

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from `y`. `seed` defaults to ones shaped like y. With
  // create_graph the gradient computation is itself recorded on this tape,
  // so the returned Vars can be differentiated again. Nodes are visited
  // once each, highest id first; accumulation follows the input order of
  // each node.
  std::vector<Var> gradient(const Var& y, std::span<const Var> wrt,
                            const Tensor* seed = nullptr,
                            bool create_graph = false);

 private:
  struct Node {
    std::shared_ptr<const Tensor> value;
    std::vector<Var> inputs;
    VjpFn vjp;
  };

  friend class NoGradGuard;
  Var handle(int id) const;

  std::vector<Node> nodes_;
  bool recording_ = true;
};

// Suspends recording on a tape for the lifetime of the guard.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& tape);
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool previous_;
};

}  // namespace tomcoord::ad

#include "tomcoord/autodiff/tape.hpp"

#include "tomcoord/autodiff/ops.hpp"

namespace tomcoord::ad {

Var Var::constant(Tensor value) {
  Var v;
  v.value_ = std::make_shared<const Tensor>(std::move(value));
  return v;
}

Var Tape::handle(int id) const {
  Var v;
  v.value_ = nodes_[static_cast<std::size_t>(id)].value;
  v.tape_ = const_cast<Tape*>(this);
  v.node_ = id;
  return v;
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(
      Node{std::make_shared<const Tensor>(std::move(value)), {}, nullptr});
  return handle(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, VjpFn vjp) {
  nodes_.push_back(Node{std::make_shared<const Tensor>(std::move(value)),
                        std::move(inputs), std::move(vjp)});
  return handle(static_cast<int>(nodes_.size()) - 1);
}

NoGradGuard::NoGradGuard(Tape& tape) : tape_(tape), previous_(tape.recording_) {
  tape_.recording_ = false;
}

NoGradGuard::~NoGradGuard() { tape_.recording_ = previous_; }

namespace {

struct RecordingScope {
  RecordingScope(bool& flag, bool value) : flag_(flag), previous_(flag) {
    flag_ = value;
  }
  ~RecordingScope() { flag_ = previous_; }
  bool& flag_;
  bool previous_;
};

}  // namespace

std::vector<Var> Tape::gradient(const Var& y, std::span<const Var> wrt,
                                const Tensor* seed, bool create_graph) {
  if (!y.is_constant() && y.tape() != this) {
    throw std::invalid_argument("gradient: output was recorded on another tape");
  }
  Tensor seed_value =
      seed != nullptr ? *seed : Tensor::full(y.shape(), 1.0);
  if (seed_value.size() != y.value().size()) {
    throw ShapeError("gradient: seed shape " + shape_str(seed_value.shape()) +
                     " does not match output shape " + shape_str(y.shape()));
  }
  seed_value = seed_value.reshaped(y.shape());

  std::vector<Var> result(wrt.size());
  if (!y.is_constant()) {
    RecordingScope scope(recording_, create_graph);
    const auto top = static_cast<std::size_t>(y.node());
    std::vector<Var> grads(top + 1);
    grads[top] = Var::constant(std::move(seed_value));
    for (std::size_t i = top + 1; i-- > 0;) {
      if (!grads[i].defined() || !nodes_[i].vjp) continue;
      // Copies: recording may grow nodes_ during the vjp call.
      const VjpFn vjp = nodes_[i].vjp;
      const std::vector<Var> inputs = nodes_[i].inputs;
      const std::vector<Var> input_grads =
          vjp(handle(static_cast<int>(i)), grads[i]);
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Var& in = inputs[k];
        if (in.is_constant() || in.tape() != this) continue;
        if (k >= input_grads.size() || !input_grads[k].defined()) continue;
        Var& slot = grads[static_cast<std::size_t>(in.node())];
        slot = slot.defined() ? add(slot, input_grads[k]) : input_grads[k];
      }
    }
    for (std::size_t w = 0; w < wrt.size(); ++w) {
      const Var& target = wrt[w];
      if (!target.is_constant() && target.tape() == this &&
          static_cast<std::size_t>(target.node()) <= top &&
          grads[static_cast<std::size_t>(target.node())].defined()) {
        result[w] = grads[static_cast<std::size_t>(target.node())];
      }
    }
  }
  for (std::size_t w = 0; w < wrt.size(); ++w) {
    if (!result[w].defined()) {
      result[w] = Var::constant(Tensor::zeros(wrt[w].shape()));
    }
  }
  return result;
}

}  // namespace tomcoord::ad

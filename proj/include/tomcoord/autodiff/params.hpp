#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tomcoord/autodiff/ops.hpp"

namespace tomcoord::ad {

struct ParamSegment {
  std::string name;
  Tensor value;
  friend bool operator==(const ParamSegment&, const ParamSegment&) = default;
};

// Named parameter segments in a fixed order. Segment order is the
// accumulation order everywhere parameters are reduced.
class ParamVector {
 public:
  ParamVector() = default;

  void add(std::string name, Tensor value);

  std::size_t num_segments() const { return segments_.size(); }
  std::size_t total_size() const;
  const ParamSegment& segment(std::size_t i) const { return segments_[i]; }
  ParamSegment& segment(std::size_t i) { return segments_[i]; }
  const std::vector<ParamSegment>& segments() const { return segments_; }

  // Index of a segment, or throws std::out_of_range.
  std::size_t index_of(const std::string& name) const;
  const Tensor& operator[](const std::string& name) const;
  Tensor& operator[](const std::string& name);

  bool same_structure(const ParamVector& other) const;
  ParamVector zeros_like() const;

  std::vector<double> flatten() const;
  // Writes flat values back in segment order.
  void assign_flat(std::span<const double> flat);

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<ParamSegment> segments_;
};

// Parameters placed on a tape as leaves, one Var per segment.
std::vector<Var> bind(Tape& tape, const ParamVector& params);
// Constant Vars for every segment (no gradient).
std::vector<Var> constants(const ParamVector& params);
// Copies Var values back into a ParamVector with the layout of `like`.
ParamVector unbind(const ParamVector& like, std::span<const Var> vars);

// out = params - lr ⊙ grad, with one learning rate per segment.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     std::span<const double> lrs);
// Recorded form of the same update; lrs are Vars so the step itself can be
// differentiated (by the parameters and by the learning rates).
std::vector<Var> sgd_step(std::span<const Var> params,
                          std::span<const Var> grads,
                          std::span<const Var> lrs);

// Heavy-ball SGD: v = mu v + g; p -= lr v.
class Momentum {
 public:
  Momentum(double lr, double mu) : lr_(lr), mu_(mu) {}
  void step(ParamVector& params, const ParamVector& grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double mu_;
  ParamVector velocity_;
};

// A differentiable program: params and inputs in, one output.
using Program =
    std::function<Var(std::span<const Var> params, std::span<const Var> inputs)>;

struct ForwardResult {
  Tensor output;
  std::unique_ptr<Tape> tape;
  Var out;
  std::vector<Var> param_vars;
  ParamVector layout;
};

ForwardResult forward(const Program& program, std::span<const Tensor> inputs,
                      const ParamVector& params);

// Gradient of <seed, output> with respect to every parameter segment.
ParamVector backward(const ForwardResult& result, const Tensor& seed);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst_segment;
  bool passed = true;
};

// Compares backward() against central finite differences (step 1e-5) on
// the scalar <seed, output> where seed is a fixed pseudo-random projection.
// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
GradCheckReport grad_check(const Program& program, const ParamVector& params,
                           std::span<const Tensor> inputs, double tolerance,
                           std::uint64_t seed = 0);

// Binary format: "TOMPOP1" + version byte, segment directory, then a
// little-endian f32 payload.
void write_params(std::ostream& os, const ParamVector& params);
ParamVector read_params(std::istream& is);
void save_params(const std::string& path, const ParamVector& params);
ParamVector load_params(const std::string& path);

}  // namespace tomcoord::ad

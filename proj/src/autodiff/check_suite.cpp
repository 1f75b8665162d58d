#include "tomcoord/autodiff/check_suite.hpp"

#include <random>
#include <vector>

#include "tomcoord/autodiff/ops.hpp"
#include "tomcoord/autodiff/params.hpp"
#include "tomcoord/autodiff/tape.hpp"

namespace tomcoord::ad {

namespace {

Tensor normal_tensor(std::mt19937_64& rng, Shape shape, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = n(rng);
  return t;
}

struct Recipe {
  std::size_t rows, in, hidden, out;
  int activation;  // 0 tanh, 1 softmax, 2 exp of a damped input, 3 gated tanh
  int head;        // 0 log_softmax nll-like, 1 softmax, 2 row means, 3 concat with input sums
  bool second_order;
  double lr;
  std::vector<std::size_t> labels;
};

Var activate(const Var& z, int kind) {
  switch (kind) {
    case 0: return tanh(z);
    case 1: return softmax(z);
    case 2: return exp(scale(z, 0.3));
    default: return mul(tanh(z), softmax(z));
  }
}

Var body(const Recipe& r, std::span<const Var> p, const Var& x) {
  const Var h = activate(add(matmul(x, p[0]), p[1]), r.activation);
  const Var logits = matmul(h, p[2]);
  switch (r.head) {
    case 0: {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < r.rows; ++i) idx.push_back(i * r.out + r.labels[i]);
      return scale(mean(gather(log_softmax(logits), idx, {r.rows, 1})), -1.0);
    }
    case 1: return softmax(logits);
    case 2: return mean(logits, Axis::cols);
    default: return concat(logits, sum(x, Axis::cols), Axis::cols);
  }
}

// Loss after one recorded sgd step on a support batch. Finite-difference
// probes pass constants, so a local tape stands in for the caller's.
Var inner_then_outer(const Recipe& r, std::span<const Var> p, const Var& support, const Var& query) {
  Tape local;
  Tape* tape = p[0].tape();
  std::vector<Var> w(p.begin(), p.end());
  if (tape == nullptr) {
    tape = &local;
    for (auto& v : w) v = local.variable(v.value());
  }
  Recipe inner = r;
  inner.head = 0;
  const Var loss = body(inner, w, support);
  const auto g = tape->gradient(loss, w, nullptr, true);
  std::vector<Var> lrs;
  for (std::size_t i = 0; i < w.size(); ++i) lrs.push_back(Var::constant(Tensor::scalar(r.lr)));
  const auto stepped = sgd_step(w, g, lrs);
  const Var out = body(r, stepped, query);
  return p[0].tape() != nullptr ? out : Var::constant(out.value());
}

}  // namespace

SuiteReport grad_check_suite(std::size_t n, std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  SuiteReport report;
  for (std::size_t k = 0; k < n; ++k) {
    Recipe r;
    r.rows = pick(1, 4);
    r.in = pick(2, 4);
    r.hidden = pick(2, 5);
    r.out = pick(2, 4);
    r.activation = static_cast<int>(pick(0, 3));
    r.head = static_cast<int>(pick(0, 3));
    r.second_order = k % 4 == 3;
    r.lr = 0.1 + 0.4 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (std::size_t i = 0; i < r.rows; ++i) r.labels.push_back(pick(0, r.out - 1));

    ParamVector params;
    params.add("w1", normal_tensor(rng, {r.in, r.hidden}, 0.7));
    params.add("b1", normal_tensor(rng, {1, r.hidden}, 0.3));
    params.add("w2", normal_tensor(rng, {r.hidden, r.out}, 0.7));
    const std::vector<Tensor> inputs{normal_tensor(rng, {r.rows, r.in}, 1.0),
                                     normal_tensor(rng, {r.rows, r.in}, 1.0)};
    Program prog = [r](std::span<const Var> p, std::span<const Var> in) {
      return r.second_order ? inner_then_outer(r, p, in[0], in[1]) : body(r, p, in[0]);
    };
    const auto rep = grad_check(prog, params, inputs, tolerance, seed + k);
    ++report.programs;
    report.second_order += r.second_order ? 1 : 0;
    report.checked += rep.checked;
    if (rep.max_rel_err >= report.max_rel_err) {
      report.max_rel_err = rep.max_rel_err;
      report.worst = "program" + std::to_string(k) + "/" + rep.worst_segment;
    }
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

}  // namespace tomcoord::ad

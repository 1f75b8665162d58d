#pragma once

#include <span>
#include <vector>

#include "tomcoord/coordination/coordination.hpp"

namespace tomcoord::analysis {

// One visited state: the candidate pool seen by the speaker, the ToM's
// adapted predictions and the true listener's distributions for every
// candidate, and the law used to draw the message.
struct StateSample {
  int listener = 0;
  int planned = 0;
  std::size_t support = 0;
  std::vector<std::vector<double>> p_tom;   // [message][action]
  std::vector<std::vector<double>> p_true;  // [message][action]
  std::vector<double> message_law;          // sigma * Q + (1 - sigma) * U
};

// States visited by aggregation sessions with the given ToM and listeners
// (the same law as dataset aggregation). Stops after n_states states.
std::vector<StateSample> sample_states(const agents::ToMState& tom,
                                       std::span<const agents::ListenerModel> listeners,
                                       const coordination::EnvSetup& env,
                                       const coordination::AggregateConfig& cfg, std::size_t n_states);

struct Epsilon {
  double kl = 0.0;   // E_{s,m} KL(P_ToM || P_listener)
  double nll = 0.0;  // E_{s,m} -log P_ToM(listener's greedy action)
};

// Expectation over m is taken exactly under each state's message law.
Epsilon measure_epsilon(std::span<const StateSample> states);

struct Delta {
  double min = 0.0;
  double p5 = 0.0;
};

// Pool mass sum_m P_ToM(a^g | m, s) over states.
Delta measure_delta(std::span<const StateSample> states);

// Q_ToM(. | s) and Q(. | s): goal-action mass normalised over the pool.
std::vector<double> q_tom(const StateSample& s);
std::vector<double> q_true(const StateSample& s);

// (n_m sqrt(eps / (2 (1 - sigma))) + W0(eps)) / delta.
double bound_rhs(double epsilon, double delta, double n_m, double sigma);

struct BoundReport {
  double epsilon = 0.0;
  double epsilon_nll = 0.0;
  double delta = 0.0;
  double delta_p5 = 0.0;
  double n_m = 0.0;
  double sigma = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  bool vacuous = false;  // delta == 0
  std::size_t states = 0;
};

// Throws std::invalid_argument for sigma >= 1 or no states.
BoundReport verify_bound(std::span<const StateSample> states, double sigma, double n_m);

struct PinskerReport {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // max TV^2 / (KL / 2) over pairs with KL > 0
  bool passed() const { return violations == 0; }
};

// TV^2 <= KL / 2 for every (state, message) pair, up to max_pairs pairs.
PinskerReport pinsker_check(std::span<const StateSample> states, std::size_t max_pairs);

}  // namespace tomcoord::analysis

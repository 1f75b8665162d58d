#pragma once

#include <span>
#include <vector>

#include "tomcoord/agents/listener.hpp"

namespace tomcoord::agents {

// Meta-initialization plus one learnable inner learning rate per segment.
struct ToMState {
  NetConfig cfg;
  ParamVector theta;
  std::vector<double> inner_lrs;
  int n_inner = 5;
};

ToMState init_tom(const NetConfig& cfg, Rng& rng, double inner_lr = 0.01, int n_inner = 5);

// Inner learning rate `gate` for the gate segments ("gate", "tok.gate") and
// `other` for everything else.
void set_inner_lrs(ToMState& tom, double gate, double other);

// n_inner SGD steps on the support NLL, starting from theta. An empty
// support returns theta unchanged.
ParamVector adapt(const ToMState& tom, std::span<const Interaction> support);

// The adapted mimic as a listener (full vocabulary).
ListenerModel adapted_listener(const ToMState& tom, std::span<const Interaction> support);

// Action distribution for each message after adapting on the support.
std::vector<std::vector<double>> predict(const ToMState& tom, std::span<const Interaction> support,
                                         const ObsPtr& obs, std::span<const Message> messages);

struct Episode {
  std::vector<Interaction> support;
  Interaction target;
};

enum class MetaMode { exact, first_order };

struct MetaGradient {
  double loss = 0.0;        // mean target NLL
  ParamVector grad_theta;
  std::vector<double> grad_lrs;
};

// Mean target NLL after adaptation on each episode's support, with its
// gradient w.r.t. theta and the inner learning rates.
MetaGradient meta_loss(const ToMState& tom, std::span<const Episode> episodes,
                       MetaMode mode = MetaMode::exact);

// Support of size k ~ U{0..max_support} drawn from `records`, target drawn
// from the remaining records. Needs at least two records.
Episode sample_episode(const std::vector<Interaction>& records, int max_support, Rng& rng);

struct EpisodeScore {
  double nll = 0.0;
  double accuracy = 0.0;  // argmax prediction equals the recorded action
};
EpisodeScore score_episodes(const ToMState& tom, std::span<const Episode> episodes);

struct MetaTrainOptions {
  double eta_outer = 1e-4;
  int updates = 100;        // outer steps in this call
  std::size_t batch = 2;
  int max_support = 19;     // K - 1
  MetaMode mode = MetaMode::exact;
  bool learn_theta = true;
  bool learn_lrs = true;
  double lr_min = 1e-5;
  double lr_max = 1.0;
  double clip_norm = 0.0;   // 0 disables gradient-norm clipping
  std::uint64_t seed = 0;
};

struct MetaTrainReport {
  std::vector<double> batch_loss;
  double mean_loss = 0.0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Plain SGD on the meta-loss over episodes drawn per listener. Each entry
// of `per_listener` holds one listener's recorded interactions.
MetaTrainReport meta_train(ToMState& tom, const std::vector<std::vector<Interaction>>& per_listener,
                           const MetaTrainOptions& opt);

struct PretrainOptions {
  int epochs = 10;
  std::size_t batch = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

// Supervised warm start of theta on pooled interactions (the population's
// average behaviour). Returns the per-epoch mean NLL.
std::vector<double> pretrain_tom(ToMState& tom, const std::vector<std::vector<Interaction>>& per_listener,
                                 const PretrainOptions& opt);

}  // namespace tomcoord::agents

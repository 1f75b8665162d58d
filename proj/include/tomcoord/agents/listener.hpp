#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tomcoord/autodiff/params.hpp"
#include "tomcoord/util/random.hpp"
#include "tomcoord/worlds/message.hpp"
#include "tomcoord/worlds/navigation.hpp"
#include "tomcoord/worlds/referential.hpp"

namespace tomcoord::agents {

using ad::ParamVector;
using ad::Tensor;
using ad::Var;
using worlds::Message;

struct NetConfig {
  int vocab = worlds::kRefVocab;  // last id is UNK
  int n_tags = worlds::kNumLanguages;
  int tag_base = 0;               // message tag of gate row 0
  int d = 32;
  int hidden = 64;                // context MLP width (navigation)
  int cand_dim = worlds::kNumValues;
  int global_dim = 0;
  int n_actions = worlds::kNumCandidates;

  int unk() const { return vocab - 1; }
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

NetConfig referential_config(int d = 32);
NetConfig navigation_config(int d = 32);

// What a listener sees at one decision point, independent of the message.
struct Observation {
  int n_actions = 0;
  std::vector<double> cand;    // n_actions x cand_dim
  std::vector<double> global;  // global_dim
  std::vector<bool> legal;     // n_actions
};
using ObsPtr = std::shared_ptr<const Observation>;

ObsPtr make_observation(const worlds::RefGame& game);
ObsPtr make_observation(const worlds::GridWorld& world);

struct Interaction {
  ObsPtr obs;
  Message message;
  int action = 0;
};

struct Query {
  ObsPtr obs;
  const Message* message = nullptr;
};

// Gumbel-softmax message: one distribution over the vocabulary per position.
struct SoftMessage {
  std::vector<std::vector<double>> positions;
  int tag = 0;
};

// Constant tensors for a batch of (observation, message) pairs, built once
// and reused across forward passes (e.g. every MAML inner step).
struct Batch {
  std::size_t size = 0;
  int n_actions = 0;
  std::vector<std::size_t> tokens;     // hard tokens, flattened
  std::vector<std::size_t> gate_rows;  // gate row per token
  Tensor soft;                         // [n_tok x vocab] when soft
  Tensor gate_mix;                     // [n_tok x n_tags+1] when soft
  bool is_soft = false;
  Tensor pool;                         // [B x n_tok] mean pooling
  Tensor cand;                         // [B*A x cand_dim]
  Tensor global;                       // [B x global_dim]
  Tensor mask;                         // [B x A], 0 or a large negative
  std::vector<std::size_t> expand;     // row b repeated A times
  std::vector<int> actions;            // gold actions when known
};

// token_map (optional) sends out-of-vocabulary ids to UNK.
Batch make_batch(const NetConfig& cfg, std::span<const Query> queries,
                 const std::vector<int>* token_map = nullptr);
Batch make_batch(const NetConfig& cfg, std::span<const Interaction> records,
                 const std::vector<int>* token_map = nullptr);
Batch make_soft_batch(const NetConfig& cfg, std::span<const ObsPtr> obs,
                      std::span<const SoftMessage> messages,
                      const std::vector<int>* token_map, std::span<const int> actions);

ParamVector init_params(const NetConfig& cfg, Rng& rng);
ParamVector zero_params(const NetConfig& cfg);

// Log-probabilities [B x A]; illegal actions get a large negative logit.
Var log_probs(const NetConfig& cfg, std::span<const Var> params, const Batch& batch);

struct NllResult {
  Var loss;
  std::size_t clamped = 0;  // gold actions with probability below 1e-12
};
// Mean -log p(a | o, m) over the batch's gold actions.
NllResult nll(const Var& log_probs, const Batch& batch);

// A listener: configuration, parameters and its vocabulary filter.
struct ListenerModel {
  NetConfig cfg;
  ParamVector params;
  std::vector<int> token_map;  // empty = full vocabulary

  const std::vector<int>* map() const { return token_map.empty() ? nullptr : &token_map; }
};

// Probability rows, one per message, for a shared observation.
std::vector<std::vector<double>> action_probs(const ListenerModel& model, const ObsPtr& obs,
                                              std::span<const Message> messages);
std::vector<double> action_probs(const ListenerModel& model, const ObsPtr& obs,
                                 const Message& message);

enum class ActMode { greedy, sample };
// Greedy breaks ties toward the lowest index.
int act(const std::vector<double>& probs, ActMode mode, Rng* rng = nullptr);
int act(const ListenerModel& model, const ObsPtr& obs, const Message& m, ActMode mode,
        Rng* rng = nullptr);

std::size_t argmax(std::span<const double> xs);

}  // namespace tomcoord::agents

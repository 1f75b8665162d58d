#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tomcoord/agents/listener.hpp"
#include "tomcoord/agents/speaker.hpp"

namespace tomcoord::population {

using agents::Interaction;
using agents::ListenerModel;

enum class EnvKind { referential, navigation };
std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& s);

// Referential weights: one simplex over languages. Navigation weights: one
// simplex over instruction levels per task type, task-major.
struct ListenerSpec {
  int id = 0;
  EnvKind env = EnvKind::referential;
  std::vector<double> weights;
  std::vector<int> vocab;  // referential only, sorted
  std::uint64_t train_seed = 0;

  std::span<const double> level_weights(worlds::TaskType t) const;
  friend bool operator==(const ListenerSpec&, const ListenerSpec&) = default;
};

struct Split {
  std::vector<int> train, val, test;
  friend bool operator==(const Split&, const Split&) = default;
};

struct PopulationManifest {
  EnvKind env = EnvKind::referential;
  std::vector<ListenerSpec> specs;
  Split split;
  std::uint64_t seed = 0;
  int vocab_budget = 0;
  std::vector<double> alpha;
  friend bool operator==(const PopulationManifest&, const PopulationManifest&) = default;
};

class InvalidAlpha : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PopulationOptions {
  std::array<int, 3> ratio{4, 1, 1};  // train : val : test
  int vocab_budget = 40;
};

// Ratio 3:1:1 is the usual choice for navigation populations.
PopulationOptions default_options(EnvKind kind);

// Every language's caption corpus plus lexicons ranked by corpus frequency.
struct RefCorpora {
  std::vector<worlds::Lexicon> lexicons;
  std::vector<std::vector<worlds::CaptionPair>> captions;
  std::vector<std::vector<int>> ranked() const;
};
RefCorpora make_ref_corpora(std::size_t per_language, std::uint64_t seed);

// Split sizes for n listeners: val and test are floor(n * share), at least
// one each; train takes the rest.
std::array<int, 3> split_sizes(int n, const std::array<int, 3>& ratio);

PopulationManifest sample_population(EnvKind kind, int n, const std::vector<double>& alpha,
                                     std::uint64_t seed, const PopulationOptions& opt,
                                     const RefCorpora* corpora = nullptr);

// floor(budget * w_i) most frequent tokens per language; leftover slots go
// to the highest-weight languages. Result is sorted.
std::vector<int> build_vocab(std::span<const double> weights, int budget,
                             const std::vector<std::vector<int>>& ranked);

// Listener-side id map: tokens outside `vocab` become UNK.
std::vector<int> token_map_for(const std::vector<int>& vocab);

class EmptyDataset : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caption pairs with at most one out-of-vocabulary token, each turned into a
// game around the captioned object.
std::vector<Interaction> build_ref_training_set(const ListenerSpec& spec, const RefCorpora& corpora);

// Expert rollouts; at each step the instruction level is drawn from the
// spec's weights for the task type.
std::vector<Interaction> build_nav_training_set(const ListenerSpec& spec, int games_per_task);

struct ListenerTrainOptions {
  int epochs = 30;
  std::size_t batch = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double self_play = 0.5;     // share of self-play steps when a companion is given
  double tau = 1.0;           // gumbel-softmax temperature, first epoch
  double tau_decay = 0.9;
};
// Navigation listeners diverge at the referential step size.
ListenerTrainOptions default_train_options(EnvKind kind);

struct ListenerTrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  std::size_t self_play_steps = 0;
  std::size_t supervised_steps = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ListenerModel train_listener(const ListenerSpec& spec, const std::vector<Interaction>& data,
                             const ListenerTrainOptions& opt,
                             const agents::RnnSpeaker* companion = nullptr,
                             ListenerTrainReport* report = nullptr);

// Untrained listener shell (config and token map) for a spec.
ListenerModel listener_shell(const ListenerSpec& spec);

// Greedy accuracy of a listener on labelled interactions.
double accuracy(const ListenerModel& model, std::span<const Interaction> data);

std::string manifest_to_json(const PopulationManifest& m);
PopulationManifest manifest_from_json(const std::string& text);

}  // namespace tomcoord::population

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tomcoord/agents/speaker.hpp"
#include "tomcoord/agents/tom.hpp"
#include "tomcoord/population/population.hpp"

namespace tomcoord::coordination {

using agents::CandidatePool;
using agents::Interaction;
using agents::ListenerModel;
using agents::Message;
using agents::ObsPtr;
using agents::ToMState;
using population::EnvKind;

enum class SpeakerKind { tom, gold, non_tom, rsa, random };
std::string to_string(SpeakerKind k);
SpeakerKind speaker_kind_from_string(const std::string& s);

struct Distribution {
  std::vector<double> p;
  bool fallback = false;  // all masses were zero; uniform returned
};

// Q(m) ∝ mass(m) * exp(-kappa * cost(m)) over the pool.
Distribution instruction_distribution(std::span<const Message> pool, std::span<const double> mass,
                                      double kappa);

// Per-message mass on the goal action. For a greedy listener only messages
// whose predicted argmax is the goal keep their mass; when none does, all
// masses are kept.
std::vector<double> goal_masses(const std::vector<std::vector<double>>& probs, int goal, agents::ActMode mode);

// Level-1 RSA: S1(m | a) ∝ L0(a | m) * prior(m); an empty prior is uniform.
Distribution rsa_speaker(std::span<const double> l0_goal_probs, std::span<const double> prior = {});

// Level-n RSA over a full literal listener l0[m][a]: S_n(m | a) ∝
// L_{n-1}(a | m) prior(m), L_n(a | m) ∝ S_n(m | a). Returns S_level(. | goal).
Distribution rsa_speaker(const std::vector<std::vector<double>>& l0, int goal, int level,
                         std::span<const double> prior = {});

// Draw from sigma * q + (1 - sigma) * uniform.
std::size_t mixture_sample(std::span<const double> q, double sigma, Rng& rng);

// Lowest index among maxima.
std::size_t argmax_index(std::span<const double> xs);

// Navigation baseline: level weights drawn once, a level drawn per step.
struct RandomSpeaker {
  std::array<double, worlds::kNumLevels> weights{};
  static RandomSpeaker draw(Rng& rng, double concentration = 0.7);
  // Pool index of the drawn level's candidate.
  std::size_t choose(Rng& rng) const;
};

struct EnvSetup {
  EnvKind kind = EnvKind::referential;
  std::vector<worlds::Lexicon> lexicons;                 // referential
  const agents::RnnSpeaker* trained_speaker = nullptr;   // referential option
  int native_language = 0;
};

// What the speaker faces at one step. `effective[i]` is the message the
// listener conditions on if pool candidate i is sent: in navigation the
// empty message keeps the most recent instruction of the current game.
struct Decision {
  ObsPtr obs;
  CandidatePool pool;
  std::vector<Message> effective;
};

struct Outcome {
  bool game_done = false;
  bool success = false;
};

class Game {
 public:
  virtual ~Game() = default;
  virtual const Decision& decision() const = 0;
  virtual Outcome advance(std::size_t choice, int action) = 0;
};

std::unique_ptr<Game> new_game(const EnvSetup& env, Rng& rng);

inline constexpr int kRefSessionLength = 20;
inline constexpr int kNavSessionLength = 100;

struct SessionConfig {
  int K = kRefSessionLength;
  double kappa = 0.0;
  SpeakerKind kind = SpeakerKind::tom;
  agents::ActMode listener_mode = agents::ActMode::greedy;
  std::uint64_t seed = 0;
};

struct StepRecord {
  int step = 0;
  int game = 0;
  Message message;
  int message_index = 0;
  double cost = 0.0;
  int action = 0;
  int planned = 0;
  int prediction = -1;  // ToM argmax, when a ToM is tracked
  bool prediction_correct = false;
  bool success = false;  // the game ended successfully at this step
  bool game_done = false;
};

struct SessionResult {
  int points = 0;
  int games = 0;
  std::vector<StepRecord> steps;
};

// Everything a speaker kind may consult.
struct Speakers {
  const ToMState* tom = nullptr;
  std::vector<const ListenerModel*> rsa_base;  // training listeners
  int rsa_level = 1;
  double random_concentration = 0.7;
};

SessionResult evaluate_session(const ListenerModel& listener, const Speakers& speakers, const EnvSetup& env,
                               const SessionConfig& cfg);

struct AggregateConfig {
  int K = kRefSessionLength;
  double kappa = 0.0;
  double sigma = 0.5;
  int sessions_per_listener = 4;
  agents::ActMode listener_mode = agents::ActMode::greedy;
  std::uint64_t seed = 0;
};

// One record list per listener: (o, effective message, listener action)
// from sessions where messages are drawn from sigma * Q + (1 - sigma) * U
// and Q uses the current ToM adapted on the session so far.
std::vector<std::vector<Interaction>> aggregate_dataset(const ToMState& tom,
                                                        std::span<const ListenerModel> listeners,
                                                        const EnvSetup& env, const AggregateConfig& cfg);

struct ValEpisode {
  agents::Episode episode;
  int listener = 0;  // index into the validation listeners
};

// Session prefixes as support and the next interaction as target.
std::vector<ValEpisode> make_val_episodes(std::span<const ListenerModel> listeners, const EnvSetup& env,
                                          int K, int sessions_per_listener, std::uint64_t seed);

struct ValScore {
  double nll = 0.0;
  double kl = 0.0;  // mean KL(P_ToM || P_listener) at the targets
  double accuracy = 0.0;
};
ValScore score_validation(const ToMState& tom, std::span<const ValEpisode> episodes,
                          std::span<const ListenerModel> listeners);

struct EpochLog {
  int epoch = 0;
  double eps_nll = 0.0;   // mean meta-training loss
  double eps_kl = 0.0;    // validation KL
  double val_nll = 0.0;
  double val_accuracy = 0.0;
  std::size_t records = 0;
};

struct TrainingConfig {
  AggregateConfig aggregate;
  agents::MetaTrainOptions meta;
  int n_outer = 500;
  int patience = 10;
  int val_sessions = 4;
  std::uint64_t seed = 0;
};

struct TrainingState {
  ToMState current;
  ToMState best;
  double best_score = -1.0;
  int best_epoch = -1;
  int next_epoch = 0;
  int stale = 0;
  std::vector<EpochLog> log;
  bool finished = false;
};

// Alternates aggregation and meta-training until n_outer epochs or
// `patience` epochs without validation improvement. `on_epoch` runs after
// every epoch (checkpointing); returning false stops early without marking
// the run finished.
TrainingState run_training(TrainingState state, std::span<const ListenerModel> train,
                           std::span<const ListenerModel> val, const EnvSetup& env, const TrainingConfig& cfg,
                           const std::function<bool(const TrainingState&)>& on_epoch = {});

}  // namespace tomcoord::coordination

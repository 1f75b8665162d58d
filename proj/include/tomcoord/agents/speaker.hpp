#pragma once

#include <vector>

#include "tomcoord/agents/listener.hpp"

namespace tomcoord::agents {

// Candidate messages for one step plus the action the speaker wants taken.
struct CandidatePool {
  std::vector<Message> messages;
  int planned_action = 0;
  std::vector<double> scores;  // higher is preferred by the speaker alone
};

inline constexpr int kRefPoolSize = worlds::kNumLanguages * worlds::kNumVariants;  // 50

// Every template variant in every language, language-major
// (index = language * kNumVariants + variant). Scores rank variant first and
// the native language first within a variant.
CandidatePool referential_speak(const worlds::RefGame& game,
                                const std::vector<worlds::Lexicon>& lexicons,
                                int native_language = 0);

// The four instruction levels for plan step `step` followed by the empty
// message. Throws std::out_of_range for a step past the plan.
CandidatePool nav_speak(const worlds::ExpertPlan& plan, std::size_t step);
// Same pool built from the replanned expert step in the current state.
CandidatePool nav_speak(const worlds::GridWorld& world);

// Conditional caption generator: Elman RNN over a language marker and the
// previous token. The target's attribute features set the initial state and
// also drive every step.
struct RnnSpeakerConfig {
  int d = 32;
  int hidden = 64;
  int max_len = 6;
};

inline constexpr int kSpeakerEos = worlds::kRefWords;              // output id 180
inline constexpr int kSpeakerOut = worlds::kRefWords + 1;          // 181 outputs
inline constexpr int kSpeakerIn = worlds::kRefWords + worlds::kNumLanguages;  // words + markers

struct RnnSpeaker {
  RnnSpeakerConfig cfg;
  ParamVector params;
};

RnnSpeaker init_rnn_speaker(const RnnSpeakerConfig& cfg, Rng& rng);

struct SpeakerFitOptions {
  int epochs = 15;
  std::size_t batch = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct SpeakerFitReport {
  std::vector<double> epoch_loss;  // mean teacher-forcing NLL per token
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Teacher-forcing NLL over (object, caption) pairs, all languages at once.
SpeakerFitReport trained_speaker_fit(RnnSpeaker& speaker,
                                     const std::vector<std::vector<worlds::CaptionPair>>& corpora,
                                     const SpeakerFitOptions& opt);

// Mean per-token teacher-forcing NLL, without updating.
double speaker_loss(const RnnSpeaker& speaker, const std::vector<worlds::CaptionPair>& pairs);

struct BeamCandidate {
  Message message;
  double log_prob = 0.0;
};

// Beam search (default width 10); returns the best `keep` finished
// sequences, sorted by log-probability descending.
std::vector<BeamCandidate> beam_search(const RnnSpeaker& speaker, const worlds::ObjectFeature& target,
                                       int language, int width = 10, int keep = 5);

// Pool of beam outputs for every language; scores are beam log-probabilities.
CandidatePool trained_speak(const RnnSpeaker& speaker, const worlds::RefGame& game);

// Free-running gumbel-softmax sample. Each position is a distribution over
// the listener vocabulary (UNK slot zero); stops once the hard token is EOS.
SoftMessage gumbel_sample(const RnnSpeaker& speaker, const worlds::ObjectFeature& target,
                          int language, double tau, Rng& rng);

}  // namespace tomcoord::agents

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomcoord/coordination/coordination.hpp"

namespace tomcoord::runner {

using population::EnvKind;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PopulationConfig {
  int n = 24;
  std::vector<double> alpha;
  std::array<int, 3> ratio{4, 1, 1};
  int vocab_budget = 40;
  int captions_per_language = 300;  // referential corpora
  std::uint64_t corpus_seed = 1;
  int games_per_task = 100;         // navigation expert rollouts
};

struct ListenerConfig {
  int epochs = 20;
  double lr = 0.05;
  int batch = 32;
  double self_play = 0.5;  // needs the speaker stage when positive
};

struct SpeakerConfig {
  int epochs = 15;
  bool trained_pool = false;  // candidate pools from beam search instead of templates
  int native_language = 0;
};

struct TomConfig {
  int d = 32;
  int pretrain_sessions = 200;
  int pretrain_epochs = 30;
  double pretrain_lr = 0.05;
  double gate_lr = 1.0;
  double other_lr = 1e-5;
  int n_inner = 5;
  double eta_outer = 1e-3;
  int n_outer = 10;
  int updates = 100;
  int batch = 2;
  int patience = 10;
  int K = 20;
  double kappa = 0.0;
  double sigma = 0.5;
  int sessions_per_listener = 2;
  int val_sessions = 16;
  double clip_norm = 5.0;
  bool first_order = false;
  double lr_min = 1e-5;
  double lr_max = 1.0;
  int repetitions = 3;
};

struct EvalConfig {
  int sessions_per_listener = 500;
  int K = 20;
  std::vector<std::string> speakers{"gold", "tom", "rsa", "non-tom"};
  std::vector<double> kappas{0.0};
  int rsa_level = 1;
  double random_concentration = 0.7;
};

struct VerifyConfig {
  int states = 1000;
  double sigma = 0.5;
  double n_m = 50;
  int pinsker_pairs = 10000;
  int grad_programs = 100;
};

struct RunConfig {
  std::string name;
  EnvKind env = EnvKind::referential;
  std::string scale = "desk";
  std::uint64_t seed = 7;
  bool single_thread = false;
  PopulationConfig population;
  ListenerConfig listener;
  SpeakerConfig speaker;
  TomConfig tom;
  EvalConfig eval;
  VerifyConfig verify;
};

// scale: "desk" or "paper" (population sizes and meta-learning settings).
RunConfig default_config(EnvKind env, const std::string& scale = "desk");

nlohmann::json to_json(const RunConfig& cfg);
// Fields missing from `j` take the defaults for its env and scale; unknown
// keys and out-of-range values throw ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

// "a.b.c=value"; value is parsed as JSON, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

void validate(const RunConfig& cfg);

enum class Stage { population, speaker, listeners, tom, eval, verify };
std::string to_string(Stage s);

// FNV-1a over the canonical JSON of the settings a stage depends on
// (its own section plus every upstream one), as 16 hex digits.
std::string stage_hash(const RunConfig& cfg, Stage s);
std::string config_hash(const RunConfig& cfg);

}  // namespace tomcoord::runner

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "tomcoord/analysis/bound.hpp"
#include "tomcoord/analysis/metrics.hpp"
#include "tomcoord/autodiff/check_suite.hpp"
#include "tomcoord/runner/store.hpp"

namespace tomcoord::runner {

struct RunContext {
  RunConfig cfg;
  fs::path dir;
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

// Applies cfg.single_thread (or all hardware threads) to parallel_for.
RunContext make_context(const RunConfig& cfg, std::function<void(const std::string&)> log = {});

void gen_population(const RunContext& ctx);
void train_speaker(const RunContext& ctx);
void train_listeners(const RunContext& ctx);
// Trains every repetition, resuming from checkpoints. A non-negative
// stop_after ends each repetition after that many epochs in this call.
void train_tom(const RunContext& ctx, int stop_after = -1);

struct Population {
  population::PopulationManifest manifest;
  std::vector<agents::ListenerModel> listeners;  // by spec id
  std::vector<agents::ListenerModel> train, val, test;
  std::unique_ptr<agents::RnnSpeaker> speaker;
  coordination::EnvSetup env;
};
Population load_population(const RunContext& ctx);

agents::ToMState load_tom(const RunContext& ctx, int rep);
coordination::TrainingState load_training_state(const RunContext& ctx, int rep);

struct ResultKey {
  std::string speaker;
  double kappa = 0.0;
  int rep = 0;
  auto operator<=>(const ResultKey&) const = default;
};
using EvalResults = std::map<ResultKey, std::vector<coordination::SessionResult>>;

struct SummaryRow {
  std::string speaker;
  double kappa = 0.0;
  std::string split = "test";
  std::size_t sessions = 0;
  double success = 0.0;   // mean per step
  double points = 0.0;    // mean per session
  double accuracy = 0.0;  // ToM prediction accuracy, when tracked
  double instruction_length = 0.0;
  double step_cost = 0.0;
};

struct EvalSummary {
  EvalResults results;
  std::vector<SummaryRow> rows;  // averaged over repetitions
};

// Sessions are matched across speaker kinds: the same (rep, listener,
// session) index always uses the same seed.
EvalSummary evaluate(const RunContext& ctx);
EvalResults load_results(const RunContext& ctx);
std::vector<SummaryRow> summarize(const RunConfig& cfg, const EvalResults& results);

struct VerifySummary {
  std::vector<analysis::BoundReport> bounds;  // one per repetition
  std::vector<analysis::PinskerReport> pinsker;
  ad::SuiteReport grad;
  bool passed() const;
};
// sabotage: evaluate freshly initialised parameters instead of the checkpoint.
VerifySummary verify(const RunContext& ctx, bool sabotage = false);

// SVG and CSV files under <run>/plots; returns the paths written.
std::vector<fs::path> plot(const RunContext& ctx);

nlohmann::json session_to_json(const coordination::SessionResult& s);
coordination::SessionResult session_from_json(const nlohmann::json& j);

}  // namespace tomcoord::runner

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tomcoord/analysis/numerics.hpp"
#include "tomcoord/coordination/coordination.hpp"

namespace tomcoord::analysis {

using coordination::SessionResult;

enum class StepField { prediction_correct, success };

// Per-session mean of `field` over steps [first, last] (0-based, inclusive).
std::vector<double> window_means(std::span<const SessionResult> sessions, StepField field, int first, int last);

struct CurvePoint {
  int step = 0;  // 1-based
  Interval ci;
};

// Mean of `field` at every step with a bootstrap 95% CI over sessions.
// Throws std::invalid_argument with fewer than min_sessions sessions.
std::vector<CurvePoint> step_curve(std::span<const SessionResult> sessions, StepField field, Rng& rng,
                                   std::size_t resamples = 1000, std::size_t min_sessions = 30);

// ToM prediction accuracy curve.
inline std::vector<CurvePoint> adaptation_curve(std::span<const SessionResult> sessions, Rng& rng,
                                                std::size_t resamples = 1000) {
  return step_curve(sessions, StepField::prediction_correct, rng, resamples);
}

struct WindowComparison {
  Interval early;
  Interval late;
  Interval diff;  // paired, late - early
  bool separated() const { return late.lo > early.hi; }
};

WindowComparison compare_windows(std::span<const SessionResult> sessions, StepField field, int early_first,
                                 int early_last, int late_first, int late_last, Rng& rng,
                                 std::size_t resamples = 1000);

double mean_success(std::span<const SessionResult> sessions);
double mean_points(std::span<const SessionResult> sessions);

// Per game: the distinct non-empty instructions sent, counted once each.
struct GameInstructions {
  double length = 0.0;  // total tokens
  double cost = 0.0;    // total cost
};
std::vector<GameInstructions> game_instructions(const SessionResult& session);

struct CostPointsRow {
  std::string speaker;
  double kappa = 0.0;
  double points = 0.0;             // mean per session
  double instruction_length = 0.0;  // mean per game
  double instruction_cost = 0.0;    // mean per game
  double step_cost = 0.0;           // mean C(m) per step
  std::array<double, worlds::kNumLevels + 1> level_share{};  // [0] empty, [i] level i
  std::size_t sessions = 0;
};

CostPointsRow cost_points_row(std::string speaker, double kappa, std::span<const SessionResult> sessions);

// Level of a navigation message, 0 for the empty message.
int message_level(const worlds::Message& m);

}  // namespace tomcoord::analysis

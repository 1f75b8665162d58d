#include "tomcoord/analysis/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace tomcoord::analysis {

namespace {

double field_value(const coordination::StepRecord& r, StepField f) {
  return f == StepField::success ? (r.success ? 1.0 : 0.0) : (r.prediction_correct ? 1.0 : 0.0);
}

}  // namespace

std::vector<double> window_means(std::span<const SessionResult> sessions, StepField field, int first, int last) {
  if (first < 0 || last < first) throw std::invalid_argument("window_means: bad window");
  std::vector<double> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    if (static_cast<int>(s.steps.size()) <= last) throw std::invalid_argument("window_means: session too short");
    double sum = 0.0;
    for (int k = first; k <= last; ++k) sum += field_value(s.steps[static_cast<std::size_t>(k)], field);
    out.push_back(sum / (last - first + 1));
  }
  return out;
}

std::vector<CurvePoint> step_curve(std::span<const SessionResult> sessions, StepField field, Rng& rng,
                                   std::size_t resamples, std::size_t min_sessions) {
  if (sessions.size() < min_sessions) {
    throw std::invalid_argument("step_curve: need at least " + std::to_string(min_sessions) + " sessions");
  }
  std::size_t K = sessions.front().steps.size();
  for (const auto& s : sessions) K = std::min(K, s.steps.size());
  std::vector<CurvePoint> out;
  std::vector<double> xs(sessions.size());
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < sessions.size(); ++i) xs[i] = field_value(sessions[i].steps[k], field);
    out.push_back({static_cast<int>(k) + 1, bootstrap_mean_ci(xs, rng, resamples)});
  }
  return out;
}

WindowComparison compare_windows(std::span<const SessionResult> sessions, StepField field, int early_first,
                                 int early_last, int late_first, int late_last, Rng& rng, std::size_t resamples) {
  const auto early = window_means(sessions, field, early_first, early_last);
  const auto late = window_means(sessions, field, late_first, late_last);
  WindowComparison c;
  c.early = bootstrap_mean_ci(early, rng, resamples);
  c.late = bootstrap_mean_ci(late, rng, resamples);
  c.diff = bootstrap_paired_diff_ci(late, early, rng, resamples);
  return c;
}

double mean_success(std::span<const SessionResult> sessions) {
  double hits = 0.0, steps = 0.0;
  for (const auto& s : sessions) {
    for (const auto& r : s.steps) hits += r.success ? 1.0 : 0.0;
    steps += static_cast<double>(s.steps.size());
  }
  return steps > 0.0 ? hits / steps : 0.0;
}

double mean_points(std::span<const SessionResult> sessions) {
  if (sessions.empty()) return 0.0;
  double p = 0.0;
  for (const auto& s : sessions) p += s.points;
  return p / static_cast<double>(sessions.size());
}

std::vector<GameInstructions> game_instructions(const SessionResult& session) {
  std::vector<GameInstructions> out;
  std::vector<worlds::Message> seen;
  int current = -1;
  for (const auto& r : session.steps) {
    if (r.game != current) {
      current = r.game;
      out.emplace_back();
      seen.clear();
    }
    if (r.message.is_empty() || std::find(seen.begin(), seen.end(), r.message) != seen.end()) continue;
    seen.push_back(r.message);
    out.back().length += static_cast<double>(r.message.tokens.size());
    out.back().cost += worlds::cost(r.message);
  }
  return out;
}

int message_level(const worlds::Message& m) {
  if (m.is_empty()) return 0;
  if (m.kind != worlds::MessageKind::navigation || m.tag < 1 || m.tag > worlds::kNumLevels) {
    throw std::invalid_argument("message_level: not a navigation message");
  }
  return m.tag;
}

CostPointsRow cost_points_row(std::string speaker, double kappa, std::span<const SessionResult> sessions) {
  CostPointsRow row;
  row.speaker = std::move(speaker);
  row.kappa = kappa;
  row.sessions = sessions.size();
  row.points = mean_points(sessions);
  double games = 0.0, steps = 0.0;
  for (const auto& s : sessions) {
    for (const auto& g : game_instructions(s)) {
      row.instruction_length += g.length;
      row.instruction_cost += g.cost;
      games += 1.0;
    }
    for (const auto& r : s.steps) {
      row.step_cost += r.cost;
      row.level_share[static_cast<std::size_t>(message_level(r.message))] += 1.0;
      steps += 1.0;
    }
  }
  if (games > 0.0) {
    row.instruction_length /= games;
    row.instruction_cost /= games;
  }
  if (steps > 0.0) {
    row.step_cost /= steps;
    for (double& x : row.level_share) x /= steps;
  }
  return row;
}

}  // namespace tomcoord::analysis

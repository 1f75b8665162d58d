#include "tomcoord/analysis/bound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tomcoord/analysis/numerics.hpp"
#include "tomcoord/util/parallel.hpp"

namespace tomcoord::analysis {

using coordination::Decision;

namespace {

std::vector<StateSample> session_states(const agents::ToMState& tom, const agents::ListenerModel& listener,
                                        int listener_index, const coordination::EnvSetup& env,
                                        const coordination::AggregateConfig& cfg, std::uint64_t seed) {
  Rng game_rng = substream(seed, "games");
  Rng act_rng = substream(seed, "listener");
  Rng msg_rng = substream(seed, "messages");
  std::vector<agents::Interaction> support;
  std::vector<StateSample> out;
  auto game = coordination::new_game(env, game_rng);
  for (int step = 0; step < cfg.K; ++step) {
    const Decision& d = game->decision();
    const std::size_t n = d.effective.size();
    StateSample s;
    s.listener = listener_index;
    s.planned = d.pool.planned_action;
    s.support = support.size();
    s.p_tom = agents::predict(tom, support, d.obs, d.effective);
    s.p_true = agents::action_probs(listener, d.obs, d.effective);
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = s.p_tom[i][static_cast<std::size_t>(s.planned)];
    const auto q = coordination::instruction_distribution(d.pool.messages, mass, cfg.kappa).p;
    s.message_law.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.message_law[i] = cfg.sigma * q[i] + (1.0 - cfg.sigma) / n;

    const std::size_t choice = coordination::mixture_sample(q, cfg.sigma, msg_rng);
    const int action = agents::act(s.p_true[choice], cfg.listener_mode, &act_rng);
    support.push_back({d.obs, d.effective[choice], action});
    out.push_back(std::move(s));
    if (game->advance(choice, action).game_done && step + 1 < cfg.K) game = coordination::new_game(env, game_rng);
  }
  return out;
}

std::vector<double> goal_share(const std::vector<std::vector<double>>& probs, int goal) {
  std::vector<double> w(probs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) z += w[i] = probs[i][static_cast<std::size_t>(goal)];
  if (z <= 0.0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (double& x : w) x /= z;
  return w;
}

}  // namespace

std::vector<StateSample> sample_states(const agents::ToMState& tom, std::span<const agents::ListenerModel> listeners,
                                       const coordination::EnvSetup& env, const coordination::AggregateConfig& cfg,
                                       std::size_t n_states) {
  if (listeners.empty()) throw std::invalid_argument("sample_states: no listeners");
  if (cfg.K < 1) throw std::invalid_argument("sample_states: K must be at least 1");
  const auto K = static_cast<std::size_t>(cfg.K);
  const std::size_t sessions = (n_states + K - 1) / K;
  std::vector<std::vector<StateSample>> per(sessions);
  parallel_for(sessions, [&](std::size_t j) {
    const std::size_t l = j % listeners.size();
    per[j] = session_states(tom, listeners[l], static_cast<int>(l), env, cfg, substream_seed(cfg.seed, "states", j));
  });
  std::vector<StateSample> out;
  out.reserve(sessions * K);
  for (auto& v : per) {
    for (auto& s : v) {
      if (out.size() == n_states) break;
      out.push_back(std::move(s));
    }
  }
  return out;
}

Epsilon measure_epsilon(std::span<const StateSample> states) {
  if (states.empty()) throw std::invalid_argument("measure_epsilon: no states");
  Epsilon e;
  for (const auto& s : states) {
    for (std::size_t m = 0; m < s.p_tom.size(); ++m) {
      const double w = s.message_law[m];
      e.kl += w * kl_divergence(s.p_tom[m], s.p_true[m]);
      const std::size_t a = agents::argmax(s.p_true[m]);
      e.nll += w * -std::log(std::max(s.p_tom[m][a], std::numeric_limits<double>::min()));
    }
  }
  e.kl /= static_cast<double>(states.size());
  e.nll /= static_cast<double>(states.size());
  return e;
}

Delta measure_delta(std::span<const StateSample> states) {
  if (states.empty()) throw std::invalid_argument("measure_delta: no states");
  std::vector<double> mass;
  mass.reserve(states.size());
  for (const auto& s : states) {
    double z = 0.0;
    for (const auto& p : s.p_tom) z += p[static_cast<std::size_t>(s.planned)];
    mass.push_back(z);
  }
  Delta d;
  d.min = *std::min_element(mass.begin(), mass.end());
  d.p5 = quantile(std::move(mass), 0.05);
  return d;
}

std::vector<double> q_tom(const StateSample& s) { return goal_share(s.p_tom, s.planned); }
std::vector<double> q_true(const StateSample& s) { return goal_share(s.p_true, s.planned); }

double bound_rhs(double epsilon, double delta, double n_m, double sigma) {
  if (sigma >= 1.0) throw std::invalid_argument("bound_rhs: sigma must be below 1");
  if (epsilon < 0.0) throw std::invalid_argument("bound_rhs: negative epsilon");
  if (delta <= 0.0) return std::numeric_limits<double>::infinity();
  return (n_m * std::sqrt(epsilon / (2.0 * (1.0 - sigma))) + lambert_w0(epsilon)) / delta;
}

BoundReport verify_bound(std::span<const StateSample> states, double sigma, double n_m) {
  if (sigma >= 1.0) throw std::invalid_argument("verify_bound: sigma must be below 1");
  if (states.empty()) throw std::invalid_argument("verify_bound: no states");
  BoundReport r;
  const auto eps = measure_epsilon(states);
  const auto del = measure_delta(states);
  r.epsilon = eps.kl;
  r.epsilon_nll = eps.nll;
  r.delta = del.min;
  r.delta_p5 = del.p5;
  r.n_m = n_m;
  r.sigma = sigma;
  r.states = states.size();
  for (const auto& s : states) r.lhs += kl_divergence(q_tom(s), q_true(s));
  r.lhs /= static_cast<double>(states.size());
  r.vacuous = r.delta <= 0.0;
  r.rhs = bound_rhs(r.epsilon, r.delta, n_m, sigma);
  r.holds = r.lhs <= r.rhs;
  return r;
}

PinskerReport pinsker_check(std::span<const StateSample> states, std::size_t max_pairs) {
  PinskerReport r;
  for (const auto& s : states) {
    for (std::size_t m = 0; m < s.p_tom.size() && r.pairs < max_pairs; ++m) {
      const double kl = kl_divergence(s.p_tom[m], s.p_true[m]);
      const double tv = total_variation(s.p_tom[m], s.p_true[m]);
      ++r.pairs;
      // Slack for rounding in the two sums.
      if (tv * tv > kl / 2.0 + 1e-12) ++r.violations;
      if (kl > 0.0) r.max_ratio = std::max(r.max_ratio, tv * tv / (kl / 2.0));
    }
    if (r.pairs >= max_pairs) break;
  }
  return r;
}

}  // namespace tomcoord::analysis

#include "tomcoord/coordination/coordination.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tomcoord/analysis/numerics.hpp"
#include "tomcoord/util/parallel.hpp"

namespace tomcoord::coordination {

using namespace worlds;

std::string to_string(SpeakerKind k) {
  switch (k) {
    case SpeakerKind::tom: return "tom";
    case SpeakerKind::gold: return "gold";
    case SpeakerKind::non_tom: return "non-tom";
    case SpeakerKind::rsa: return "rsa";
    case SpeakerKind::random: return "random";
  }
  return "?";
}

SpeakerKind speaker_kind_from_string(const std::string& s) {
  for (auto k : {SpeakerKind::tom, SpeakerKind::gold, SpeakerKind::non_tom, SpeakerKind::rsa, SpeakerKind::random}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown speaker kind '" + s + "'");
}

namespace {

Distribution normalize(std::vector<double> w) {
  Distribution d;
  const double z = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(z > 0.0) || !std::isfinite(z)) {
    d.p.assign(w.size(), 1.0 / static_cast<double>(w.size()));
    d.fallback = true;
    return d;
  }
  for (double& v : w) v /= z;
  d.p = std::move(w);
  return d;
}

}  // namespace

Distribution instruction_distribution(std::span<const Message> pool, std::span<const double> mass, double kappa) {
  if (pool.empty() || pool.size() != mass.size()) {
    throw std::invalid_argument("instruction_distribution: pool and masses differ in size or are empty");
  }
  std::vector<double> w(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) w[i] = mass[i] * std::exp(-kappa * cost(pool[i]));
  return normalize(std::move(w));
}

Distribution rsa_speaker(std::span<const double> l0, std::span<const double> prior) {
  if (l0.empty()) throw std::invalid_argument("rsa_speaker: empty pool");
  std::vector<double> w(l0.size());
  for (std::size_t i = 0; i < l0.size(); ++i) w[i] = l0[i] * (prior.empty() ? 1.0 : prior[i]);
  return normalize(std::move(w));
}

Distribution rsa_speaker(const std::vector<std::vector<double>>& l0, int goal, int level,
                         std::span<const double> prior) {
  if (l0.empty() || level < 1) throw std::invalid_argument("rsa_speaker: empty pool or level below 1");
  const std::size_t M = l0.size(), A = l0[0].size();
  if (goal < 0 || static_cast<std::size_t>(goal) >= A) throw std::invalid_argument("rsa_speaker: goal out of range");
  auto listener = l0;
  bool fallback = false;
  for (int n = 1;; ++n) {
    // Speaker at level n, one distribution over messages per action.
    std::vector<std::vector<double>> speaker(A);
    for (std::size_t a = 0; a < A; ++a) {
      std::vector<double> col(M);
      for (std::size_t m = 0; m < M; ++m) col[m] = listener[m][a];
      auto d = rsa_speaker(col, prior);
      if (a == static_cast<std::size_t>(goal)) fallback = fallback || d.fallback;
      speaker[a] = std::move(d.p);
    }
    if (n == level) return {speaker[static_cast<std::size_t>(goal)], fallback};
    for (std::size_t m = 0; m < M; ++m) {
      std::vector<double> row(A);
      for (std::size_t a = 0; a < A; ++a) row[a] = speaker[a][m];
      listener[m] = normalize(std::move(row)).p;
    }
  }
}

std::size_t mixture_sample(std::span<const double> q, double sigma, Rng& rng) {
  std::vector<double> w(q.size());
  const double u = (1.0 - sigma) / static_cast<double>(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = sigma * q[i] + u;
  return sample_discrete(rng, w);
}

std::size_t argmax_index(std::span<const double> xs) { return agents::argmax(xs); }

RandomSpeaker RandomSpeaker::draw(Rng& rng, double concentration) {
  RandomSpeaker s;
  const auto w = sample_dirichlet(rng, std::vector<double>(kNumLevels, concentration));
  std::copy(w.begin(), w.end(), s.weights.begin());
  return s;
}

std::size_t RandomSpeaker::choose(Rng& rng) const {
  return sample_discrete(rng, std::vector<double>(weights.begin(), weights.end()));
}

namespace {

class RefGameImpl : public Game {
 public:
  RefGameImpl(const EnvSetup& env, Rng& rng) {
    game_ = sample_ref_game(rng);
    d_.obs = agents::make_observation(game_);
    d_.pool = env.trained_speaker != nullptr ? agents::trained_speak(*env.trained_speaker, game_)
                                             : agents::referential_speak(game_, env.lexicons, env.native_language);
    d_.effective = d_.pool.messages;
  }
  const Decision& decision() const override { return d_; }
  Outcome advance(std::size_t, int action) override { return {true, action == game_.target}; }

 private:
  RefGame game_;
  Decision d_;
};

class NavGameImpl : public Game {
 public:
  explicit NavGameImpl(Rng& rng) : world_(sample_nav_game(rng)) { refresh(); }
  const Decision& decision() const override { return d_; }
  Outcome advance(std::size_t choice, int action) override {
    const Message& m = d_.pool.messages[choice];
    if (!m.is_empty()) active_ = m;
    const auto r = nav_step(world_, action);
    world_ = r.world;
    if (!r.done) refresh();
    return {r.done, r.success};
  }

 private:
  void refresh() {
    d_.obs = agents::make_observation(world_);
    d_.pool = agents::nav_speak(world_);
    // Staying silent means "keep following the current instruction", so it
    // is offered only once an instruction is active in this game.
    if (active_.is_empty()) {
      d_.pool.messages.pop_back();
      d_.pool.scores.pop_back();
    }
    d_.effective = d_.pool.messages;
    if (!active_.is_empty()) d_.effective.back() = active_;
  }
  GridWorld world_;
  Message active_ = Message::empty();
  Decision d_;
};

}  // namespace

std::vector<double> goal_masses(const std::vector<std::vector<double>>& probs, int goal, agents::ActMode mode) {
  const auto g = static_cast<std::size_t>(goal);
  std::vector<double> mass(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) mass[i] = probs[i][g];
  if (mode != agents::ActMode::greedy) return mass;
  std::vector<double> hit(mass.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (agents::argmax(probs[i]) == g) {
      hit[i] = mass[i];
      any = true;
    }
  }
  return any ? hit : mass;
}

std::unique_ptr<Game> new_game(const EnvSetup& env, Rng& rng) {
  if (env.kind == EnvKind::referential) return std::make_unique<RefGameImpl>(env, rng);
  return std::make_unique<NavGameImpl>(rng);
}

SessionResult evaluate_session(const ListenerModel& listener, const Speakers& speakers, const EnvSetup& env,
                               const SessionConfig& cfg) {
  if (cfg.K < 1) throw std::invalid_argument("evaluate_session: K must be at least 1");
  if (cfg.kind == SpeakerKind::tom && speakers.tom == nullptr) {
    throw std::invalid_argument("evaluate_session: tom speaker needs a ToM model");
  }
  if (cfg.kind == SpeakerKind::rsa && speakers.rsa_base.empty()) {
    throw std::invalid_argument("evaluate_session: rsa speaker needs base listeners");
  }
  Rng game_rng = substream(cfg.seed, "games");
  Rng act_rng = substream(cfg.seed, "listener");
  Rng spk_rng = substream(cfg.seed, "speaker");
  RandomSpeaker random_speaker;
  if (cfg.kind == SpeakerKind::random) random_speaker = RandomSpeaker::draw(spk_rng, speakers.random_concentration);

  SessionResult res;
  std::vector<Interaction> support;
  auto game = new_game(env, game_rng);
  for (int step = 0; step < cfg.K; ++step) {
    const Decision& d = game->decision();
    const int planned = d.pool.planned_action;
    const std::size_t n = d.effective.size();
    std::size_t choice = 0;
    std::vector<std::vector<double>> tom_probs;
    switch (cfg.kind) {
      case SpeakerKind::tom: {
        tom_probs = agents::predict(*speakers.tom, support, d.obs, d.effective);
        const auto mass = goal_masses(tom_probs, planned, cfg.listener_mode);
        choice = argmax_index(instruction_distribution(d.pool.messages, mass, cfg.kappa).p);
        break;
      }
      case SpeakerKind::gold: {
        const auto probs = agents::action_probs(listener, d.obs, d.effective);
        const auto mass = goal_masses(probs, planned, cfg.listener_mode);
        choice = argmax_index(instruction_distribution(d.pool.messages, mass, cfg.kappa).p);
        break;
      }
      case SpeakerKind::rsa: {
        std::vector<std::vector<double>> l0;
        const double w = 1.0 / static_cast<double>(speakers.rsa_base.size());
        for (const auto* base : speakers.rsa_base) {
          const auto probs = agents::action_probs(*base, d.obs, d.effective);
          if (l0.empty()) l0.assign(n, std::vector<double>(probs[0].size(), 0.0));
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < probs[i].size(); ++a) l0[i][a] += w * probs[i][a];
          }
        }
        const auto s = rsa_speaker(l0, planned, speakers.rsa_level);
        choice = argmax_index(instruction_distribution(d.pool.messages, s.p, cfg.kappa).p);
        break;
      }
      case SpeakerKind::non_tom:
        choice = argmax_index(d.pool.scores);
        break;
      case SpeakerKind::random:
        choice = env.kind == EnvKind::navigation ? random_speaker.choose(spk_rng) : uniform_index(spk_rng, n);
        break;
    }
    const Message& eff = d.effective[choice];
    const auto lprobs = agents::action_probs(listener, d.obs, eff);
    const int action = agents::act(lprobs, cfg.listener_mode, &act_rng);

    StepRecord rec;
    rec.step = step;
    rec.game = res.games;
    rec.message = d.pool.messages[choice];
    rec.message_index = static_cast<int>(choice);
    rec.cost = cost(rec.message);
    rec.action = action;
    rec.planned = planned;
    if (!tom_probs.empty()) {
      rec.prediction = static_cast<int>(agents::argmax(tom_probs[choice]));
      rec.prediction_correct = rec.prediction == action;
    }
    support.push_back({d.obs, eff, action});
    const Outcome out = game->advance(choice, action);
    rec.game_done = out.game_done;
    rec.success = out.game_done && out.success;
    res.steps.push_back(std::move(rec));
    if (out.game_done) {
      res.points += out.success ? 1 : 0;
      ++res.games;
      if (step + 1 < cfg.K) game = new_game(env, game_rng);
    }
  }
  return res;
}

namespace {

std::vector<Interaction> aggregate_session(const ToMState& tom, const ListenerModel& listener, const EnvSetup& env,
                                           const AggregateConfig& cfg, std::uint64_t seed) {
  Rng game_rng = substream(seed, "games");
  Rng act_rng = substream(seed, "listener");
  Rng msg_rng = substream(seed, "messages");
  std::vector<Interaction> support;
  auto game = new_game(env, game_rng);
  for (int step = 0; step < cfg.K; ++step) {
    const Decision& d = game->decision();
    const std::size_t n = d.effective.size();
    std::vector<double> q(n, 1.0 / static_cast<double>(n));
    if (cfg.sigma > 0.0) {
      const auto probs = agents::predict(tom, support, d.obs, d.effective);
      std::vector<double> mass(n);
      for (std::size_t i = 0; i < n; ++i) mass[i] = probs[i][static_cast<std::size_t>(d.pool.planned_action)];
      q = instruction_distribution(d.pool.messages, mass, cfg.kappa).p;
    }
    const std::size_t choice = mixture_sample(q, cfg.sigma, msg_rng);
    const Message& eff = d.effective[choice];
    const int action = agents::act(agents::action_probs(listener, d.obs, eff), cfg.listener_mode, &act_rng);
    support.push_back({d.obs, eff, action});
    if (game->advance(choice, action).game_done && step + 1 < cfg.K) game = new_game(env, game_rng);
  }
  return support;
}

}  // namespace

std::vector<std::vector<Interaction>> aggregate_dataset(const ToMState& tom, std::span<const ListenerModel> listeners,
                                                        const EnvSetup& env, const AggregateConfig& cfg) {
  const auto S = static_cast<std::size_t>(cfg.sessions_per_listener);
  std::vector<std::vector<Interaction>> sessions(listeners.size() * S);
  parallel_for(sessions.size(), [&](std::size_t j) {
    const std::size_t l = j / S, s = j % S;
    sessions[j] = aggregate_session(tom, listeners[l], env, cfg, substream_seed(cfg.seed, "aggregate", l, s));
  });
  std::vector<std::vector<Interaction>> out(listeners.size());
  for (std::size_t j = 0; j < sessions.size(); ++j) {
    auto& dst = out[j / S];
    dst.insert(dst.end(), sessions[j].begin(), sessions[j].end());
  }
  return out;
}

std::vector<ValEpisode> make_val_episodes(std::span<const ListenerModel> listeners, const EnvSetup& env, int K,
                                          int sessions_per_listener, std::uint64_t seed) {
  AggregateConfig cfg;
  cfg.K = K;
  cfg.sigma = 0.0;
  cfg.listener_mode = agents::ActMode::greedy;
  const ToMState none;
  std::vector<ValEpisode> out;
  Rng rng = substream(seed, "val-episodes");
  for (std::size_t l = 0; l < listeners.size(); ++l) {
    for (int s = 0; s < sessions_per_listener; ++s) {
      const auto recs = aggregate_session(none, listeners[l], env, cfg,
                                          substream_seed(seed, "val", l, static_cast<std::uint64_t>(s)));
      // A few prefix lengths per session keep the set small.
      for (int k : {0, K / 4, K / 2, K - 1}) {
        const auto kk = static_cast<std::size_t>(std::clamp(k + static_cast<int>(uniform_index(rng, 2)), 0, K - 1));
        ValEpisode v;
        v.listener = static_cast<int>(l);
        v.episode.support.assign(recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(kk));
        v.episode.target = recs[kk];
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

ValScore score_validation(const ToMState& tom, std::span<const ValEpisode> episodes,
                          std::span<const ListenerModel> listeners) {
  std::vector<double> nll(episodes.size()), kl(episodes.size()), hit(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t e) {
    const auto& ep = episodes[e].episode;
    const auto& t = ep.target;
    const auto p = agents::predict(tom, ep.support, t.obs, std::span(&t.message, 1))[0];
    const auto q = agents::action_probs(listeners[static_cast<std::size_t>(episodes[e].listener)], t.obs, t.message);
    nll[e] = -std::log(std::max(p[static_cast<std::size_t>(t.action)], 1e-12));
    kl[e] = analysis::kl_divergence(p, q);
    hit[e] = agents::argmax(p) == static_cast<std::size_t>(t.action) ? 1.0 : 0.0;
  });
  ValScore s;
  s.nll = analysis::mean(nll);
  s.kl = analysis::mean(kl);
  s.accuracy = analysis::mean(hit);
  return s;
}

TrainingState run_training(TrainingState state, std::span<const ListenerModel> train,
                           std::span<const ListenerModel> val, const EnvSetup& env, const TrainingConfig& cfg,
                           const std::function<bool(const TrainingState&)>& on_epoch) {
  if (train.size() < 2) throw std::invalid_argument("run_training: need at least two training listeners");
  const auto val_eps = make_val_episodes(val, env, cfg.aggregate.K, cfg.val_sessions, cfg.seed);
  if (state.best_epoch < 0 && state.next_epoch == 0) {
    const auto s0 = score_validation(state.current, val_eps, val);
    state.best = state.current;
    state.best_score = -s0.nll;
    state.log.push_back({-1, 0.0, s0.kl, s0.nll, s0.accuracy, 0});
  }
  for (int epoch = state.next_epoch; epoch < cfg.n_outer && !state.finished; ++epoch) {
    AggregateConfig agg = cfg.aggregate;
    agg.seed = substream_seed(cfg.seed, "epoch-aggregate", static_cast<std::uint64_t>(epoch));
    const auto data = aggregate_dataset(state.current, train, env, agg);
    agents::MetaTrainOptions meta = cfg.meta;
    meta.seed = substream_seed(cfg.seed, "epoch-meta", static_cast<std::uint64_t>(epoch));
    const auto rep = agents::meta_train(state.current, data, meta);
    const auto s = score_validation(state.current, val_eps, val);
    std::size_t records = 0;
    for (const auto& d : data) records += d.size();
    state.log.push_back({epoch, rep.mean_loss, s.kl, s.nll, s.accuracy, records});
    if (-s.nll > state.best_score) {
      state.best_score = -s.nll;
      state.best = state.current;
      state.best_epoch = epoch;
      state.stale = 0;
    } else {
      ++state.stale;
    }
    state.next_epoch = epoch + 1;
    if (state.stale >= cfg.patience || state.next_epoch >= cfg.n_outer) state.finished = true;
    if (on_epoch && !on_epoch(state)) return state;
  }
  state.finished = true;
  return state;
}

}  // namespace tomcoord::coordination

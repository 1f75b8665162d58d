#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "tomcoord/coordination/coordination.hpp"

using namespace tomcoord;
using namespace tomcoord::coordination;
using namespace tomcoord::worlds;

namespace {

Message ref_message(std::size_t len) {
  Message m;
  m.kind = MessageKind::referential;
  m.tag = 0;
  m.tokens.assign(len, 0);
  return m;
}

struct Population {
  population::RefCorpora corpora = population::make_ref_corpora(200, 1);
  std::vector<ListenerModel> listeners;  // 0: all languages, 1: language 2, 2: languages 2 and 7
  EnvSetup env;

  Population() {
    population::ListenerTrainOptions opt;
    opt.epochs = 12;
    std::vector<double> a(10, 0.1), b(10, 0.0), c(10, 0.0);
    b[2] = 1.0;
    c[2] = 0.5;
    c[7] = 0.5;
    for (const auto& w : {a, b, c}) {
      population::ListenerSpec s;
      s.weights = w;
      s.vocab = population::build_vocab(w, w == a ? 180 : 18, corpora.ranked());
      s.train_seed = 5;
      listeners.push_back(population::train_listener(s, population::build_ref_training_set(s, corpora), opt));
    }
    env.kind = EnvKind::referential;
    env.lexicons = corpora.lexicons;
  }
};

const Population& pop() {
  static const Population p;
  return p;
}

ToMState random_tom(std::uint64_t seed, const agents::NetConfig& cfg = agents::referential_config()) {
  Rng rng(seed);
  return agents::init_tom(cfg, rng);
}

}  // namespace

TEST(InstructionDistribution, NoPenaltyKeepsMasses) {
  const std::vector<Message> pool{ref_message(1), ref_message(2)};
  const std::vector<double> mass{0.8, 0.2};
  const auto q = instruction_distribution(pool, mass, 0.0);
  EXPECT_NEAR(q.p[0], 0.8, 1e-12);
  EXPECT_NEAR(q.p[1], 0.2, 1e-12);
  EXPECT_FALSE(q.fallback);
}

TEST(InstructionDistribution, CostPenalty) {
  const std::vector<Message> pool{ref_message(1), ref_message(2)};
  const std::vector<double> mass{0.8, 0.2};
  const auto q = instruction_distribution(pool, mass, 1.0);
  const double a = 0.8 * std::exp(-1.0), b = 0.2 * std::exp(-2.0);
  EXPECT_NEAR(q.p[0], a / (a + b), 1e-12);
  EXPECT_NEAR(q.p[0], 0.9158, 5e-5);
  EXPECT_NEAR(q.p[1], 0.0842, 5e-5);
}

TEST(InstructionDistribution, CheapestWinsOnEqualMass) {
  const std::vector<Message> pool{ref_message(3), ref_message(1), ref_message(2), Message::empty()};
  const std::vector<double> mass(4, 0.25);
  EXPECT_EQ(argmax_index(instruction_distribution(pool, mass, 0.5).p), 3u);
  const std::vector<Message> words{ref_message(3), ref_message(1), ref_message(2)};
  EXPECT_EQ(argmax_index(instruction_distribution(words, std::vector<double>(3, 0.3), 0.5).p), 1u);
}

TEST(InstructionDistribution, ScaleInvariantAndFallback) {
  const std::vector<Message> pool{ref_message(1), ref_message(4), ref_message(2)};
  const std::vector<double> mass{0.3, 0.9, 0.1};
  std::vector<double> scaled;
  for (double m : mass) scaled.push_back(m * 37.5);
  const auto a = instruction_distribution(pool, mass, 0.7), b = instruction_distribution(pool, scaled, 0.7);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.p[i], b.p[i], 1e-12);
  EXPECT_EQ(argmax_index(a.p), argmax_index(b.p));
  const auto z = instruction_distribution(pool, std::vector<double>(3, 0.0), 0.7);
  EXPECT_TRUE(z.fallback);
  for (double v : z.p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_THROW(instruction_distribution(pool, std::vector<double>(2, 0.5), 0.0), std::invalid_argument);
}

TEST(Rsa, LevelOneHandComputation) {
  const std::vector<double> l0{1.0, 0.5};
  const auto s = rsa_speaker(l0);
  EXPECT_NEAR(s.p[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.p[1], 1.0 / 3.0, 1e-12);
  const auto u = rsa_speaker(std::vector<double>(4, 0.2));
  for (double v : u.p) EXPECT_NEAR(v, 0.25, 1e-15);
  EXPECT_TRUE(rsa_speaker(std::vector<double>(3, 0.0)).fallback);
}

TEST(Rsa, LevelTwoHandComputation) {
  // L0(a|m1) = (1, 0), L0(a|m2) = (0.5, 0.5).
  // S1(.|a1) = (2/3, 1/3), S1(.|a2) = (0, 1); L1(.|m1) = (1, 0), L1(.|m2) = (1/4, 3/4);
  // S2(.|a1) = (1, 1/4) / 1.25 = (0.8, 0.2).
  const std::vector<std::vector<double>> l0{{1.0, 0.0}, {0.5, 0.5}};
  const auto s1 = rsa_speaker(l0, 0, 1);
  EXPECT_NEAR(s1.p[0], 2.0 / 3.0, 1e-12);
  const auto s2 = rsa_speaker(l0, 0, 2);
  EXPECT_NEAR(s2.p[0], 0.8, 1e-12);
  EXPECT_NEAR(s2.p[1], 0.2, 1e-12);
  EXPECT_THROW(rsa_speaker(l0, 2, 1), std::invalid_argument);
  EXPECT_THROW(rsa_speaker(l0, 0, 0), std::invalid_argument);
}

TEST(MixtureSample, FrequenciesMatchBlend) {
  const std::vector<double> q{0.7, 0.2, 0.1};
  Rng rng(1);
  const int n = 10000;
  for (double sigma : {0.0, 0.5, 1.0}) {
    std::vector<int> counts(3, 0);
    for (int i = 0; i < n; ++i) ++counts[mixture_sample(q, sigma, rng)];
    for (std::size_t i = 0; i < 3; ++i) {
      const double expect = sigma * q[i] + (1.0 - sigma) / 3.0;
      EXPECT_NEAR(counts[i] / static_cast<double>(n), expect, 0.02) << "sigma " << sigma;
    }
  }
}

TEST(GoalMasses, GreedyListenerKeepsOnlyPredictedHits) {
  const std::vector<std::vector<double>> probs{{0.4, 0.6}, {0.7, 0.3}, {0.55, 0.45}};
  EXPECT_EQ(goal_masses(probs, 0, agents::ActMode::greedy), (std::vector<double>{0.0, 0.7, 0.55}));
  EXPECT_EQ(goal_masses(probs, 0, agents::ActMode::sample), (std::vector<double>{0.4, 0.7, 0.55}));
}

TEST(GoalMasses, NoPredictedHitKeepsAll) {
  const std::vector<std::vector<double>> probs{{0.1, 0.9}, {0.3, 0.7}};
  EXPECT_EQ(goal_masses(probs, 0, agents::ActMode::greedy), (std::vector<double>{0.1, 0.3}));
}

TEST(GoalMasses, CostNoLongerBuysAMiss) {
  // Silence is free but the listener would miss; the cheapest hit wins.
  std::vector<Message> pool(2);
  pool[1].kind = MessageKind::navigation;
  pool[1].tag = 1;
  pool[1].tokens = {0};
  const std::vector<std::vector<double>> probs{{0.45, 0.55}, {0.9, 0.1}};
  EXPECT_EQ(argmax_index(instruction_distribution(pool, goal_masses(probs, 0, agents::ActMode::sample), 2.0).p), 0u);
  EXPECT_EQ(argmax_index(instruction_distribution(pool, goal_masses(probs, 0, agents::ActMode::greedy), 2.0).p), 1u);
}

TEST(ArgmaxIndex, TiesGoLow) {
  EXPECT_EQ(argmax_index(std::vector<double>{0.2, 0.5, 0.5, 0.1}), 1u);
  EXPECT_EQ(argmax_index(std::vector<double>{3.0}), 0u);
}

TEST(RandomSpeaker, DeterministicAndFrequenciesMatchWeights) {
  Rng a(5), b(5);
  EXPECT_EQ(RandomSpeaker::draw(a).weights, RandomSpeaker::draw(b).weights);
  Rng rng(6);
  const auto sp = RandomSpeaker::draw(rng);
  EXPECT_NEAR(std::accumulate(sp.weights.begin(), sp.weights.end(), 0.0), 1.0, 1e-12);
  std::array<int, kNumLevels> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[sp.choose(rng)];
  for (int l = 0; l < kNumLevels; ++l) EXPECT_NEAR(counts[l] / static_cast<double>(n), sp.weights[l], 0.02);
  RandomSpeaker fixed;
  fixed.weights = {0.0, 0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(fixed.choose(rng), 2u);
}

TEST(SpeakerKind, NamesRoundTrip) {
  for (auto k : {SpeakerKind::tom, SpeakerKind::gold, SpeakerKind::non_tom, SpeakerKind::rsa, SpeakerKind::random}) {
    EXPECT_EQ(speaker_kind_from_string(to_string(k)), k);
  }
  EXPECT_EQ(to_string(SpeakerKind::non_tom), "non-tom");
  EXPECT_THROW(speaker_kind_from_string("oracle"), std::invalid_argument);
}

TEST(NavGame, SilenceOnlyOnceAnInstructionIsActive) {
  EnvSetup env;
  env.kind = EnvKind::navigation;
  Rng rng(7);
  auto game = new_game(env, rng);
  ASSERT_EQ(game->decision().pool.messages.size(), 4u);
  const Message first = game->decision().pool.messages[0];
  const int planned = game->decision().pool.planned_action;
  const auto out = game->advance(0, planned);
  ASSERT_FALSE(out.game_done);
  const auto& d = game->decision();
  ASSERT_EQ(d.pool.messages.size(), 5u);
  EXPECT_TRUE(d.pool.messages[4].is_empty());
  EXPECT_EQ(d.effective[4], first);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(d.effective[i], d.pool.messages[i]);
}

TEST(RefGame, PoolIsTheTemplateSpeaker) {
  Rng rng(8);
  auto game = new_game(pop().env, rng);
  const auto& d = game->decision();
  EXPECT_EQ(d.pool.messages.size(), 50u);
  EXPECT_EQ(d.effective, d.pool.messages);
  const auto out = game->advance(0, 0);
  EXPECT_TRUE(out.game_done);
}

TEST(EvaluateSession, RecordsAreConsistent) {
  const auto tom = random_tom(9);
  Speakers spk;
  spk.tom = &tom;
  SessionConfig cfg;
  cfg.kind = SpeakerKind::tom;
  cfg.seed = 10;
  const auto res = evaluate_session(pop().listeners[1], spk, pop().env, cfg);
  ASSERT_EQ(res.steps.size(), 20u);
  int points = 0;
  for (std::size_t k = 0; k < res.steps.size(); ++k) {
    const auto& s = res.steps[k];
    EXPECT_EQ(s.step, static_cast<int>(k));
    EXPECT_EQ(s.game, static_cast<int>(k));  // one referential game per step
    EXPECT_TRUE(s.game_done);
    EXPECT_EQ(s.success, s.action == s.planned);
    EXPECT_EQ(s.prediction_correct, s.prediction == s.action);
    EXPECT_DOUBLE_EQ(s.cost, cost(s.message));
    points += s.success;
  }
  EXPECT_EQ(res.points, points);
  EXPECT_EQ(res.games, 20);
  // Same seed, same session.
  const auto again = evaluate_session(pop().listeners[1], spk, pop().env, cfg);
  EXPECT_EQ(again.points, res.points);
  for (std::size_t k = 0; k < res.steps.size(); ++k) EXPECT_EQ(again.steps[k].message, res.steps[k].message);
}

TEST(EvaluateSession, FirstPredictionUsesEmptySupport) {
  const auto tom = random_tom(11);
  Speakers spk;
  spk.tom = &tom;
  SessionConfig cfg;
  cfg.seed = 12;
  const auto res = evaluate_session(pop().listeners[2], spk, pop().env, cfg);
  Rng game_rng = substream(cfg.seed, "games");
  auto game = new_game(pop().env, game_rng);
  const auto& d = game->decision();
  const auto probs = agents::predict(tom, {}, d.obs, std::span(&d.effective[res.steps[0].message_index], 1));
  EXPECT_EQ(res.steps[0].prediction, static_cast<int>(argmax_index(probs[0])));
}

TEST(EvaluateSession, RsaIgnoresHistory) {
  Speakers spk;
  spk.rsa_base = {&pop().listeners[0]};
  SessionConfig cfg;
  cfg.kind = SpeakerKind::rsa;
  cfg.seed = 13;
  // Different partners, same game sequence: RSA says the same things.
  const auto a = evaluate_session(pop().listeners[1], spk, pop().env, cfg);
  const auto b = evaluate_session(pop().listeners[2], spk, pop().env, cfg);
  for (std::size_t k = 0; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].message_index, b.steps[k].message_index);
  EXPECT_EQ(a.steps[0].prediction, -1);
}

TEST(EvaluateSession, GoldDominates) {
  const auto tom = random_tom(14);
  Speakers spk;
  spk.tom = &tom;
  spk.rsa_base = {&pop().listeners[0]};
  std::map<SpeakerKind, int> points;
  for (auto kind : {SpeakerKind::gold, SpeakerKind::tom, SpeakerKind::rsa, SpeakerKind::non_tom, SpeakerKind::random}) {
    for (int s = 0; s < 20; ++s) {
      SessionConfig cfg;
      cfg.kind = kind;
      cfg.seed = substream_seed(15, "s", static_cast<std::uint64_t>(s));
      for (std::size_t l = 1; l < 3; ++l) points[kind] += evaluate_session(pop().listeners[l], spk, pop().env, cfg).points;
    }
  }
  for (const auto& [kind, p] : points) EXPECT_GE(points[SpeakerKind::gold], p) << to_string(kind);
  EXPECT_GT(points[SpeakerKind::gold], points[SpeakerKind::random]);
}

TEST(EvaluateSession, NavigationCostPenaltyPicksCheapestLevel) {
  EnvSetup env;
  env.kind = EnvKind::navigation;
  auto tom = random_tom(16, agents::navigation_config());
  tom.theta = agents::zero_params(tom.cfg);  // every message predicts the same action distribution
  Speakers spk;
  spk.tom = &tom;
  Rng rng(17);
  ListenerModel listener{agents::navigation_config(), agents::init_params(agents::navigation_config(), rng), {}};
  SessionConfig cfg;
  cfg.K = 40;
  cfg.seed = 18;
  cfg.kappa = 10.0;
  const auto quiet = evaluate_session(listener, spk, env, cfg);
  int prev_game = -1;
  for (const auto& s : quiet.steps) {
    if (s.game != prev_game) {
      EXPECT_EQ(s.message.tag, 1);  // a new game starts with the task
    } else {
      EXPECT_TRUE(s.message.is_empty());
    }
    prev_game = s.game;
  }
  cfg.kappa = 0.0;
  for (const auto& s : evaluate_session(listener, spk, env, cfg).steps) EXPECT_EQ(s.message.tag, 1);
}

TEST(AggregateDataset, ShapesAndDeterminism) {
  const auto tom = random_tom(19);
  AggregateConfig cfg;
  cfg.sessions_per_listener = 3;
  cfg.seed = 20;
  const std::vector<ListenerModel> ls{pop().listeners[1], pop().listeners[2]};
  const auto a = aggregate_dataset(tom, ls, pop().env, cfg);
  ASSERT_EQ(a.size(), 2u);
  for (const auto& per : a) EXPECT_EQ(per.size(), 60u);
  const auto b = aggregate_dataset(tom, ls, pop().env, cfg);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < a[l].size(); ++i) {
      EXPECT_EQ(a[l][i].message, b[l][i].message);
      EXPECT_EQ(a[l][i].action, b[l][i].action);
    }
  }
  // Recorded actions are the listener's greedy choices.
  for (const auto& r : a[0]) {
    EXPECT_EQ(r.action, agents::act(agents::action_probs(ls[0], r.obs, r.message), agents::ActMode::greedy));
  }
}

TEST(RunTraining, OneEpochImprovesAndResumes) {
  const std::vector<ListenerModel> train{pop().listeners[1], pop().listeners[2]};
  const std::vector<ListenerModel> val{pop().listeners[1]};
  TrainingConfig cfg;
  cfg.n_outer = 2;
  cfg.aggregate.sessions_per_listener = 2;
  cfg.meta.eta_outer = 0.05;
  cfg.meta.updates = 30;
  cfg.meta.batch = 4;
  cfg.val_sessions = 2;
  cfg.seed = 21;
  TrainingState init;
  Rng rng(22);
  init.current = agents::init_tom(agents::referential_config(), rng);
  agents::set_inner_lrs(init.current, 1.0, 1e-5);

  const auto full = run_training(init, train, val, pop().env, cfg);
  ASSERT_EQ(full.log.size(), 3u);  // initial validation plus two epochs
  EXPECT_EQ(full.log[0].epoch, -1);
  EXPECT_LT(full.log[1].val_nll, full.log[0].val_nll);
  EXPECT_TRUE(full.finished);

  // Stop after the first epoch, then continue from the saved state.
  auto part = run_training(init, train, val, pop().env, cfg, [](const TrainingState&) { return false; });
  EXPECT_FALSE(part.finished);
  EXPECT_EQ(part.next_epoch, 1);
  const auto resumed = run_training(part, train, val, pop().env, cfg);
  EXPECT_TRUE(resumed.finished);
  EXPECT_EQ(resumed.current.theta, full.current.theta);
  EXPECT_EQ(resumed.best_epoch, full.best_epoch);
  ASSERT_EQ(resumed.log.size(), full.log.size());
  for (std::size_t i = 0; i < full.log.size(); ++i) EXPECT_EQ(resumed.log[i].val_nll, full.log[i].val_nll);
}

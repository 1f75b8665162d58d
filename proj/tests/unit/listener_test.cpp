#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "tomcoord/agents/listener.hpp"

using namespace tomcoord;
using namespace tomcoord::agents;
using namespace tomcoord::worlds;

namespace {

ListenerModel random_ref_model(std::uint64_t seed) {
  Rng rng(seed);
  ListenerModel m{referential_config(), {}, {}};
  m.params = init_params(m.cfg, rng);
  return m;
}

ListenerModel random_nav_model(std::uint64_t seed) {
  Rng rng(seed);
  ListenerModel m{navigation_config(), {}, {}};
  m.params = init_params(m.cfg, rng);
  return m;
}

}  // namespace

TEST(ListenerForward, ZeroParamsAreUniform) {
  ListenerModel m{referential_config(), zero_params(referential_config()), {}};
  const auto game = sample_ref_game(std::uint64_t{1});
  const auto lex = make_lexicons();
  const auto p = action_probs(m, make_observation(game), describe(game.candidates[0], lex[0], 0));
  for (double v : p) EXPECT_NEAR(v, 0.1, 1e-12);

  ListenerModel n{navigation_config(), zero_params(navigation_config()), {}};
  Rng rng(2);
  const auto world = sample_nav_game(rng);
  const auto legal = legal_actions(world);
  const double n_legal = static_cast<double>(std::count(legal.begin(), legal.end(), true));
  const auto q = action_probs(n, make_observation(world), expert_plan(world).levels[0][3]);
  for (int a = 0; a < kNumActions; ++a) EXPECT_NEAR(q[a], legal[a] ? 1.0 / n_legal : 0.0, 1e-12);
}

TEST(ListenerForward, RandomNetsNormalize) {
  const auto lex = make_lexicons();
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_ref_model(static_cast<std::uint64_t>(t));
    const auto game = sample_ref_game(rng);
    const auto p = action_probs(m, make_observation(game), describe(game.candidates[game.target], lex[t % 10], t % 5));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(ListenerForward, CandidatePermutationEquivariance) {
  const auto m = random_ref_model(4);
  const auto lex = make_lexicons();
  auto game = sample_ref_game(std::uint64_t{9});
  const auto msg = describe(game.candidates[game.target], lex[1], 0);
  const auto p = action_probs(m, make_observation(game), msg);
  const std::array<int, 10> perm{3, 7, 0, 9, 1, 5, 2, 8, 6, 4};
  RefGame permuted = game;
  for (int i = 0; i < 10; ++i) permuted.candidates[i] = game.candidates[perm[i]];
  const auto q = action_probs(m, make_observation(permuted), msg);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(q[i], p[perm[i]], 1e-12);
}

TEST(ListenerForward, UnknownOnlyMessagesIgnoreContent) {
  auto m = random_ref_model(5);
  m.token_map.resize(kRefVocab);
  for (int t = 0; t < kRefVocab; ++t) m.token_map[t] = token_language(t) == 0 ? t : kRefUnk;
  const auto lex = make_lexicons();
  const auto game = sample_ref_game(std::uint64_t{10});
  const auto obs = make_observation(game);
  const auto base = action_probs(m, obs, describe(game.candidates[0], lex[3], 0));
  for (int l = 1; l < kNumLanguages; ++l) {
    for (int v = 0; v < kNumVariants; ++v) {
      const auto p = action_probs(m, obs, describe(game.candidates[(l + v) % 10], lex[l], v));
      for (int a = 0; a < 10; ++a) EXPECT_NEAR(p[a], base[a], 1e-12);
    }
  }
  // Known words do change the output.
  const auto known = action_probs(m, obs, describe(game.candidates[0], lex[0], 0));
  EXPECT_GT(std::abs(known[0] - base[0]) + std::abs(known[1] - base[1]), 1e-9);
}

TEST(ListenerForward, OneHotSoftTokensMatchHardTokens) {
  auto m = random_ref_model(6);
  m.token_map.resize(kRefVocab);
  for (int t = 0; t < kRefVocab; ++t) m.token_map[t] = t % 3 == 0 ? kRefUnk : t;
  const auto lex = make_lexicons();
  const auto game = sample_ref_game(std::uint64_t{12});
  const auto obs = make_observation(game);
  const auto msg = describe(game.candidates[game.target], lex[2], 0);
  SoftMessage soft{{}, 2};
  for (int t : msg.tokens) {
    std::vector<double> row(kRefVocab, 0.0);
    row[t] = 1.0;
    soft.positions.push_back(row);
  }
  const int action = game.target;
  const Batch sb = make_soft_batch(m.cfg, std::span(&obs, 1), std::span(&soft, 1), m.map(),
                                   std::span(&action, 1));
  const auto lp = log_probs(m.cfg, ad::constants(m.params), sb).value();
  const auto p = action_probs(m, obs, msg);
  for (int a = 0; a < 10; ++a) EXPECT_NEAR(std::exp(lp[a]), p[a], 1e-12);
}

TEST(Act, GreedyTieBreakAndDeterministicRows) {
  EXPECT_EQ(act(std::vector<double>(10, 0.1), ActMode::greedy), 0);
  std::vector<double> onehot(10, 0.0);
  onehot[6] = 1.0;
  Rng rng(1);
  EXPECT_EQ(act(onehot, ActMode::greedy), 6);
  EXPECT_EQ(act(onehot, ActMode::sample, &rng), 6);
}

TEST(Act, SamplingReproducible) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  Rng a(7), b(7);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(act(p, ActMode::sample, &a), act(p, ActMode::sample, &b));
}

TEST(Nll, UniformPredictorIsLogTen) {
  const NetConfig cfg = referential_config();
  const auto lex = make_lexicons();
  std::vector<Interaction> recs;
  Rng rng(8);
  for (int i = 0; i < 5; ++i) {
    const auto g = sample_ref_game(rng);
    recs.push_back({make_observation(g), describe(g.candidates[g.target], lex[i], 0), g.target});
  }
  const Batch b = make_batch(cfg, recs);
  const auto r = nll(log_probs(cfg, ad::constants(zero_params(cfg)), b), b);
  EXPECT_NEAR(r.loss.value().item(), std::log(10.0), 1e-12);
  EXPECT_EQ(r.clamped, 0u);
}

TEST(Nll, GradCheckBothHeads) {
  const auto lex = make_lexicons();
  Rng rng(9);
  std::vector<Interaction> ref, nav;
  for (int i = 0; i < 4; ++i) {
    const auto g = sample_ref_game(rng);
    ref.push_back({make_observation(g), describe(g.candidates[g.target], lex[i], i), g.target});
    const auto w = sample_nav_game(rng);
    const auto plan = expert_plan(w);
    nav.push_back({make_observation(w), plan.levels[0][i], plan.trajectory[0]});
  }
  for (const auto& [model, records] :
       {std::pair{random_ref_model(10), ref}, std::pair{random_nav_model(11), nav}}) {
    const Batch b = make_batch(model.cfg, records);
    ad::Program prog = [&](std::span<const ad::Var> p, std::span<const ad::Var>) {
      return nll(log_probs(model.cfg, p, b), b).loss;
    };
    const auto report = ad::grad_check(prog, model.params, {}, 1e-4);
    EXPECT_LT(report.max_rel_err, 1e-4) << report.worst_segment;
  }
}

TEST(Nll, FittingOneRecordDrivesLossToZero) {
  auto m = random_ref_model(13);
  const auto lex = make_lexicons();
  const auto g = sample_ref_game(std::uint64_t{14});
  const std::vector<Interaction> recs{{make_observation(g), describe(g.candidates[g.target], lex[0], 0), g.target}};
  const Batch b = make_batch(m.cfg, recs);
  const std::vector<double> lrs(m.params.num_segments(), 0.5);
  double loss = 0.0;
  for (int it = 0; it < 300; ++it) {
    auto fr = ad::forward([&](auto p, auto) { return nll(log_probs(m.cfg, p, b), b).loss; }, {}, m.params);
    loss = fr.output.item();
    m.params = ad::sgd_step(m.params, ad::backward(fr, ad::Tensor::scalar(1.0)), lrs);
  }
  EXPECT_LT(loss, 1e-2);
}

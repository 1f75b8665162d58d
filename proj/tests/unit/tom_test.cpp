#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "tomcoord/agents/tom.hpp"
#include "tomcoord/population/population.hpp"

using namespace tomcoord;
using namespace tomcoord::agents;
using namespace tomcoord::worlds;

namespace {

struct Fixture {
  population::RefCorpora corpora = population::make_ref_corpora(200, 1);
  ListenerModel everyone;  // knows all 180 words
  ListenerModel lang2;     // knows language 2 only
  std::vector<Lexicon> lex = make_lexicons();

  Fixture() {
    population::ListenerTrainOptions opt;
    opt.epochs = 15;
    everyone = train(std::vector<double>(10, 0.1), 180, opt);
    std::vector<double> w(10, 0.0);
    w[2] = 1.0;
    lang2 = train(w, 18, opt);
  }

  ListenerModel train(std::vector<double> w, int budget, const population::ListenerTrainOptions& opt) {
    population::ListenerSpec s;
    s.weights = std::move(w);
    s.vocab = population::build_vocab(s.weights, budget, corpora.ranked());
    s.train_seed = 4;
    return population::train_listener(s, population::build_ref_training_set(s, corpora), opt);
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

// Interactions with a listener: random games, random language and variant,
// action sampled from the listener.
std::vector<Interaction> records(const ListenerModel& who, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Interaction> out;
  for (int i = 0; i < n; ++i) {
    const auto g = sample_ref_game(rng);
    const auto lang = static_cast<int>(uniform_index(rng, kNumLanguages));
    const auto var = static_cast<int>(uniform_index(rng, kNumVariants));
    const auto obs = make_observation(g);
    const auto msg = describe(g.candidates[g.target], fx().lex[static_cast<std::size_t>(lang)], var);
    out.push_back({obs, msg, act(action_probs(who, obs, msg), ActMode::sample, &rng)});
  }
  return out;
}

double support_nll(const ToMState& tom, const ParamVector& params, std::span<const Interaction> support) {
  const ListenerModel m{tom.cfg, params, {}};
  double s = 0.0;
  for (const auto& r : support) s -= std::log(action_probs(m, r.obs, r.message)[static_cast<std::size_t>(r.action)]);
  return s;
}

ToMState small_tom(std::uint64_t seed, double lr) {
  Rng rng(seed);
  return init_tom(referential_config(4), rng, lr, 3);
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

}  // namespace

TEST(Adapt, EmptySupportIsIdentity) {
  Rng rng(1);
  const auto tom = init_tom(referential_config(), rng);
  EXPECT_EQ(adapt(tom, {}), tom.theta);
}

TEST(Adapt, ZeroLearningRatesAreIdentity) {
  Rng rng(2);
  auto tom = init_tom(referential_config(), rng);
  tom.inner_lrs.assign(tom.inner_lrs.size(), 0.0);
  const auto recs = records(fx().everyone, 8, 3);
  EXPECT_EQ(adapt(tom, recs), tom.theta);
}

TEST(Adapt, SupportLossDoesNotRiseAtSmallLr) {
  Rng rng(4);
  const auto tom = init_tom(referential_config(), rng, 0.01, 5);
  const auto pool = records(fx().lang2, 400, 5);
  Rng erng(6);
  int ok = 0;
  const int n = 200;
  for (int e = 0; e < n; ++e) {
    auto ep = sample_episode(pool, 19, erng);
    if (ep.support.empty()) ep.support.push_back(ep.target);
    ok += support_nll(tom, adapt(tom, ep.support), ep.support) <= support_nll(tom, tom.theta, ep.support) + 1e-12;
  }
  EXPECT_GE(ok, static_cast<int>(0.95 * n));
}

TEST(Adapt, RepeatedRecordGainsProbability) {
  Rng rng(7);
  const auto tom = init_tom(referential_config(), rng, 0.05, 5);
  auto r = records(fx().everyone, 1, 8)[0];
  r.action = (r.action + 3) % kNumCandidates;
  const std::vector<Interaction> support(4, r);
  const auto before = predict(tom, {}, r.obs, std::span(&r.message, 1))[0][static_cast<std::size_t>(r.action)];
  const auto after = predict(tom, support, r.obs, std::span(&r.message, 1))[0][static_cast<std::size_t>(r.action)];
  EXPECT_GT(after, before);
}

TEST(Predict, ZeroParametersGiveUniform) {
  Rng rng(9);
  auto tom = init_tom(referential_config(), rng);
  tom.theta = zero_params(tom.cfg);
  const auto recs = records(fx().everyone, 6, 10);
  const std::vector<Message> msgs{recs[0].message, recs[1].message};
  // Zero parameters have zero gradient, so adaptation keeps them at zero.
  for (const auto& p : predict(tom, recs, recs[0].obs, msgs)) {
    for (double v : p) EXPECT_NEAR(v, 0.1, 1e-12);
  }
}

TEST(Predict, DistributionsNormalize) {
  Rng rng(11);
  const auto tom = init_tom(referential_config(), rng, 0.1, 5);
  const auto recs = records(fx().lang2, 12, 12);
  std::vector<Message> msgs;
  for (const auto& r : recs) msgs.push_back(r.message);
  for (const auto& p : predict(tom, std::span(recs).first(6), recs[7].obs, msgs)) {
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(SetInnerLrs, GatesGetTheirOwnRate) {
  Rng rng(30);
  auto tom = init_tom(navigation_config(), rng);
  set_inner_lrs(tom, 2.0, 0.5);
  ASSERT_EQ(tom.inner_lrs.size(), tom.theta.num_segments());
  for (std::size_t i = 0; i < tom.inner_lrs.size(); ++i) {
    const auto& name = tom.theta.segment(i).name;
    EXPECT_EQ(tom.inner_lrs[i], name == "gate" || name == "tok.gate" ? 2.0 : 0.5) << name;
  }
}

TEST(Predict, FailuresInALanguageLowerItsSuccessEstimate) {
  ToMState tom;
  tom.cfg = referential_config();
  tom.theta = fx().everyone.params;
  set_inner_lrs(tom, 1.0, 1e-5);
  tom.n_inner = 5;
  Rng rng(13);
  const int lang = 6;
  std::vector<Interaction> failures;
  for (int i = 0; i < 3; ++i) {
    const auto g = sample_ref_game(rng);
    failures.push_back({make_observation(g), describe(g.candidates[g.target], fx().lex[lang], 0),
                        (g.target + 1 + i) % kNumCandidates});
  }
  int lower = 0;
  double before = 0.0, after = 0.0;
  const int n = 50;
  for (int i = 0; i < n; ++i) {
    const auto g = sample_ref_game(rng);
    const auto obs = make_observation(g);
    const Message m = describe(g.candidates[g.target], fx().lex[lang], 0);
    const auto t = static_cast<std::size_t>(g.target);
    const double p1 = predict(tom, failures, obs, std::span(&m, 1))[0][t];
    const double p0 = predict(tom, {}, obs, std::span(&m, 1))[0][t];
    lower += p1 < p0;
    before += p0;
    after += p1;
  }
  EXPECT_LT(after, before);
  EXPECT_GE(lower, 45);
}

TEST(Predict, MimicryImprovesWithSupportSize) {
  ToMState tom;
  tom.cfg = referential_config();
  tom.theta = fx().everyone.params;
  set_inner_lrs(tom, 1.0, 1e-5);
  tom.n_inner = 5;
  const auto pool = records(fx().lang2, 2000, 14);
  Rng rng(15);
  std::vector<double> mean;
  const int n = 200;
  // Same targets for every k; supports are nested prefixes of one draw.
  std::vector<std::size_t> targets(n);
  std::vector<std::vector<std::size_t>> draws(n);
  for (int e = 0; e < n; ++e) {
    targets[e] = uniform_index(rng, pool.size());
    for (int j = 0; j < 20; ++j) draws[e].push_back(uniform_index(rng, pool.size()));
  }
  for (int k : {0, 5, 10, 20}) {
    double total = 0.0;
    for (int e = 0; e < n; ++e) {
      std::vector<Interaction> support;
      for (int j = 0; j < k; ++j) support.push_back(pool[draws[e][j]]);
      const auto& t = pool[targets[e]];
      total += kl(action_probs(fx().lang2, t.obs, t.message), predict(tom, support, t.obs, std::span(&t.message, 1))[0]);
    }
    mean.push_back(total / n);
  }
  for (std::size_t i = 1; i < mean.size(); ++i) EXPECT_LE(mean[i], mean[i - 1]) << "k index " << i;
}

TEST(SampleEpisode, TargetOutsideSupportAndSizesCovered) {
  const auto pool = records(fx().everyone, 20, 16);
  Rng rng(17);
  std::set<std::size_t> sizes;
  for (int i = 0; i < 2000; ++i) {
    const auto ep = sample_episode(pool, 19, rng);
    ASSERT_LE(ep.support.size(), 19u);
    sizes.insert(ep.support.size());
    for (const auto& s : ep.support) EXPECT_NE(s.obs, ep.target.obs);
  }
  EXPECT_EQ(sizes.size(), 20u);
  EXPECT_ANY_THROW(sample_episode(std::vector<Interaction>(pool.begin(), pool.begin() + 1), 19, rng));
}

TEST(MetaLoss, ExactEqualsFirstOrderAtZeroLearningRate) {
  auto tom = small_tom(18, 0.0);
  const auto pool = records(fx().everyone, 40, 19);
  Rng rng(20);
  std::vector<Episode> eps;
  for (int i = 0; i < 3; ++i) eps.push_back(sample_episode(pool, 10, rng));
  const auto a = meta_loss(tom, eps, MetaMode::exact);
  const auto b = meta_loss(tom, eps, MetaMode::first_order);
  EXPECT_EQ(a.loss, b.loss);
  const auto fa = a.grad_theta.flatten(), fb = b.grad_theta.flatten();
  for (std::size_t i = 0; i < fa.size(); ++i) ASSERT_NEAR(fa[i], fb[i], 1e-12);
  for (std::size_t i = 0; i < a.grad_lrs.size(); ++i) EXPECT_NEAR(a.grad_lrs[i], b.grad_lrs[i], 1e-12);
}

TEST(MetaLoss, ExactGradientMatchesFiniteDifferences) {
  const auto tom = small_tom(21, 0.3);
  const auto pool = records(fx().lang2, 30, 22);
  Rng rng(23);
  std::vector<Episode> eps{sample_episode(pool, 8, rng), sample_episode(pool, 8, rng)};
  eps[0].support.assign(pool.begin(), pool.begin() + 6);
  const auto g = meta_loss(tom, eps, MetaMode::exact);
  const auto loss_at = [&](const ToMState& t) { return meta_loss(t, eps, MetaMode::first_order).loss; };
  const double h = 1e-5;
  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };

  // One coordinate of theta per segment, then every learning rate.
  const auto flat = tom.theta.flatten();
  const auto gflat = g.grad_theta.flatten();
  std::size_t offset = 0;
  for (std::size_t s = 0; s < tom.theta.num_segments(); ++s) {
    const std::size_t i = offset + tom.theta.segment(s).value.size() / 2;
    auto plus = tom, minus = tom;
    auto fp = flat, fm = flat;
    fp[i] += h;
    fm[i] -= h;
    plus.theta.assign_flat(fp);
    minus.theta.assign_flat(fm);
    EXPECT_LT(rel((loss_at(plus) - loss_at(minus)) / (2 * h), gflat[i]), 1e-4) << tom.theta.segment(s).name;
    offset += tom.theta.segment(s).value.size();
  }
  for (std::size_t s = 0; s < tom.inner_lrs.size(); ++s) {
    auto plus = tom, minus = tom;
    plus.inner_lrs[s] += h;
    minus.inner_lrs[s] -= h;
    EXPECT_LT(rel((loss_at(plus) - loss_at(minus)) / (2 * h), g.grad_lrs[s]), 1e-4) << "lr " << s;
  }
}

TEST(MetaTrain, LowersLossAndKeepsLearningRatesInRange) {
  auto tom = small_tom(24, 0.01);
  std::vector<std::vector<Interaction>> per{records(fx().lang2, 60, 25), records(fx().everyone, 60, 26)};
  Rng rng(27);
  std::vector<Episode> eps;
  for (int i = 0; i < 40; ++i) eps.push_back(sample_episode(per[i % 2], 19, rng));
  const double before = score_episodes(tom, eps).nll;
  MetaTrainOptions opt;
  opt.eta_outer = 0.05;
  opt.updates = 60;
  opt.batch = 4;
  opt.lr_max = 0.5;
  meta_train(tom, per, opt);
  EXPECT_LT(score_episodes(tom, eps).nll, before);
  for (double lr : tom.inner_lrs) {
    EXPECT_GE(lr, opt.lr_min);
    EXPECT_LE(lr, opt.lr_max);
  }
}

TEST(Pretrain, FitsPooledInteractions) {
  auto tom = small_tom(28, 0.01);
  const std::vector<std::vector<Interaction>> per{records(fx().lang2, 200, 29)};
  PretrainOptions opt;
  opt.epochs = 5;
  const auto curve = pretrain_tom(tom, per, opt);
  ASSERT_EQ(curve.size(), 5u);
  EXPECT_LT(curve.back(), curve.front());
}

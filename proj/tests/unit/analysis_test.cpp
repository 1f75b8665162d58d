#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "tomcoord/analysis/bound.hpp"
#include "tomcoord/analysis/metrics.hpp"
#include "tomcoord/analysis/report.hpp"

using namespace tomcoord;
using namespace tomcoord::analysis;
using coordination::StepRecord;

namespace {

StateSample two_by_two(std::vector<double> tom0, std::vector<double> tom1, std::vector<double> true0,
                       std::vector<double> true1, int planned = 0) {
  StateSample s;
  s.planned = planned;
  s.p_tom = {std::move(tom0), std::move(tom1)};
  s.p_true = {std::move(true0), std::move(true1)};
  s.message_law = {0.5, 0.5};
  return s;
}

struct RandomPair {
  agents::ListenerModel listener;
  coordination::EnvSetup env;
  RandomPair() {
    Rng rng(3);
    listener.cfg = agents::referential_config();
    listener.params = agents::init_params(listener.cfg, rng);
    env.kind = population::EnvKind::referential;
    env.lexicons = worlds::make_lexicons();
  }
};

coordination::AggregateConfig agg(double sigma) {
  coordination::AggregateConfig c;
  c.sigma = sigma;
  c.seed = 11;
  return c;
}

SessionResult bernoulli_session(Rng& rng, int K, double p_early, double p_late) {
  SessionResult s;
  for (int k = 0; k < K; ++k) {
    StepRecord r;
    r.step = k;
    r.prediction_correct = uniform01(rng) < (k < K / 2 ? p_early : p_late);
    s.steps.push_back(r);
  }
  return s;
}

worlds::Message nav_msg(int level, std::size_t len) {
  worlds::Message m;
  m.kind = worlds::MessageKind::navigation;
  m.tag = level;
  m.tokens.assign(len, 1);
  return m;
}

}  // namespace

TEST(Epsilon, HandComputedValue) {
  const auto s = two_by_two({0.5, 0.5}, {0.9, 0.1}, {0.8, 0.2}, {0.9, 0.1});
  const std::vector<StateSample> states{s};
  const double kl0 = 0.5 * std::log(0.5 / 0.8) + 0.5 * std::log(0.5 / 0.2);
  const auto e = measure_epsilon(states);
  EXPECT_NEAR(e.kl, 0.5 * kl0, 1e-12);
  EXPECT_NEAR(e.nll, 0.5 * -std::log(0.5) + 0.5 * -std::log(0.9), 1e-12);
}

TEST(Epsilon, UniformPredictorAgainstOneHotListener) {
  const std::vector<double> uniform(10, 0.1);
  std::vector<double> onehot(10, 0.0);
  onehot[4] = 1.0;
  // Listener-first direction gives ln 10; ToM-first is unbounded.
  EXPECT_NEAR(kl_divergence(onehot, uniform), std::log(10.0), 1e-12);
  StateSample s;
  s.p_tom = {uniform};
  s.p_true = {onehot};
  s.message_law = {1.0};
  const std::vector<StateSample> states{s};
  EXPECT_TRUE(std::isinf(measure_epsilon(states).kl));
}

TEST(Delta, MinAndLowQuantile) {
  std::vector<StateSample> states;
  for (int i = 0; i < 100; ++i) {
    const double g = 0.01 * i;
    states.push_back(two_by_two({g, 1 - g}, {g, 1 - g}, {0.5, 0.5}, {0.5, 0.5}));
  }
  const auto d = measure_delta(states);
  EXPECT_NEAR(d.min, 0.0, 1e-12);
  EXPECT_NEAR(d.p5, 2 * 0.0495, 1e-12);
}

TEST(QShares, NormaliseGoalMass) {
  const auto s = two_by_two({0.6, 0.4}, {0.2, 0.8}, {0.3, 0.7}, {0.1, 0.9});
  const auto qt = q_tom(s), q = q_true(s);
  EXPECT_NEAR(qt[0], 0.75, 1e-12);
  EXPECT_NEAR(q[1], 0.25, 1e-12);
  const auto z = two_by_two({0, 1}, {0, 1}, {0, 1}, {0, 1});
  EXPECT_NEAR(q_tom(z)[0], 0.5, 1e-12);
}

TEST(BoundRhs, MonotoneAndLimits) {
  double prev = bound_rhs(0.0, 0.5, 50, 0.5);
  EXPECT_EQ(prev, 0.0);
  for (double eps : {1e-4, 1e-3, 0.01, 0.1, 1.0}) {
    const double r = bound_rhs(eps, 0.5, 50, 0.5);
    EXPECT_GT(r, prev);
    prev = r;
  }
  EXPECT_GT(bound_rhs(0.1, 0.2, 50, 0.5), bound_rhs(0.1, 0.4, 50, 0.5));
  EXPECT_GT(bound_rhs(0.1, 0.4, 50, 0.9), bound_rhs(0.1, 0.4, 50, 0.5));
  const double eps = 0.02;
  EXPECT_NEAR(bound_rhs(eps, 0.5, 5, 0.5), (5 * std::sqrt(eps) + lambert_w0(eps)) / 0.5, 1e-12);
  EXPECT_TRUE(std::isinf(bound_rhs(0.1, 0.0, 50, 0.5)));
  EXPECT_THROW(bound_rhs(0.1, 0.5, 50, 1.0), std::invalid_argument);
}

TEST(VerifyBound, ExactMimicHasZeroGap) {
  const RandomPair rp;
  agents::ToMState tom;
  tom.cfg = rp.listener.cfg;
  tom.theta = rp.listener.params;
  tom.inner_lrs.assign(tom.theta.segments().size(), 0.0);
  const std::vector<agents::ListenerModel> ls{rp.listener};
  const auto states = sample_states(tom, ls, rp.env, agg(0.5), 45);
  ASSERT_EQ(states.size(), 45u);
  EXPECT_EQ(states[0].support, 0u);
  EXPECT_EQ(states[19].support, 19u);
  EXPECT_EQ(states[20].support, 0u);
  const auto r = verify_bound(states, 0.5, 50);
  EXPECT_NEAR(r.epsilon, 0.0, 1e-12);
  EXPECT_NEAR(r.lhs, 0.0, 1e-12);
  EXPECT_GT(r.delta, 0.0);
  EXPECT_FALSE(r.vacuous);
  EXPECT_TRUE(r.holds);
}

TEST(VerifyBound, LawMixesSigmaWithUniform) {
  const RandomPair rp;
  Rng rng(4);
  const auto tom = agents::init_tom(agents::referential_config(), rng);
  const std::vector<agents::ListenerModel> ls{rp.listener};
  for (double sigma : {0.0, 0.5}) {
    const auto states = sample_states(tom, ls, rp.env, agg(sigma), 5);
    for (const auto& s : states) {
      const auto q = q_tom(s);
      for (std::size_t m = 0; m < q.size(); ++m) {
        EXPECT_NEAR(s.message_law[m], sigma * q[m] + (1 - sigma) / q.size(), 1e-12);
      }
    }
  }
  const auto states = sample_states(tom, ls, rp.env, agg(0.5), 20);
  const auto r = verify_bound(states, 0.5, 50);
  EXPECT_GT(r.epsilon, 0.0);
  EXPECT_GE(r.lhs, 0.0);
  EXPECT_THROW(verify_bound(states, 1.0, 50), std::invalid_argument);
  EXPECT_THROW(verify_bound({}, 0.5, 50), std::invalid_argument);
}

TEST(Pinsker, HoldsOnTenThousandPairs) {
  const RandomPair rp;
  Rng rng(5);
  const auto tom = agents::init_tom(agents::referential_config(), rng);
  const std::vector<agents::ListenerModel> ls{rp.listener};
  const auto states = sample_states(tom, ls, rp.env, agg(0.5), 200);
  const auto r = pinsker_check(states, 10000);
  EXPECT_EQ(r.pairs, 10000u);
  EXPECT_TRUE(r.passed());
  EXPECT_GT(r.max_ratio, 0.0);
  EXPECT_LE(r.max_ratio, 1.0);
}

TEST(AdaptationCurve, NeedsThirtySessions) {
  Rng rng(6);
  std::vector<SessionResult> s;
  for (int i = 0; i < 29; ++i) s.push_back(bernoulli_session(rng, 20, 0.5, 0.5));
  EXPECT_THROW(adaptation_curve(s, rng), std::invalid_argument);
  s.push_back(bernoulli_session(rng, 20, 0.5, 0.5));
  const auto c = adaptation_curve(s, rng);
  ASSERT_EQ(c.size(), 20u);
  EXPECT_EQ(c.front().step, 1);
  EXPECT_EQ(c.back().step, 20);
}

TEST(AdaptationCurve, IntervalsNarrowWithMoreSessions) {
  Rng rng(7);
  auto width = [&](int n) {
    std::vector<SessionResult> s;
    for (int i = 0; i < n; ++i) s.push_back(bernoulli_session(rng, 20, 0.5, 0.5));
    const auto c = adaptation_curve(s, rng);
    double w = 0.0;
    for (const auto& p : c) w += p.ci.hi - p.ci.lo;
    return w / c.size();
  };
  const double w30 = width(30), w480 = width(480);
  EXPECT_LT(w480, 0.5 * w30);
  // About 4 sd of a Bernoulli(0.5) mean.
  EXPECT_NEAR(w480, 2 * 1.96 * 0.5 / std::sqrt(480.0), 0.015);
}

TEST(CompareWindows, DetectsImprovementAndItsAbsence) {
  Rng rng(8);
  std::vector<SessionResult> up, flat;
  for (int i = 0; i < 60; ++i) {
    up.push_back(bernoulli_session(rng, 20, 0.3, 0.8));
    flat.push_back(bernoulli_session(rng, 20, 0.5, 0.5));
  }
  const auto a = compare_windows(up, StepField::prediction_correct, 0, 4, 15, 19, rng);
  EXPECT_TRUE(a.separated());
  EXPECT_NEAR(a.diff.mean, 0.5, 0.1);
  const auto b = compare_windows(flat, StepField::prediction_correct, 0, 4, 15, 19, rng);
  EXPECT_FALSE(b.separated());
  EXPECT_LT(b.diff.lo, 0.0);
  EXPECT_THROW(window_means(flat, StepField::success, 15, 20), std::invalid_argument);
}

TEST(GameInstructions, DistinctInstructionsCountOnce) {
  SessionResult s;
  auto push = [&](int game, worlds::Message m) {
    StepRecord r;
    r.game = game;
    r.message = std::move(m);
    r.cost = worlds::cost(r.message);
    s.steps.push_back(r);
  };
  push(0, nav_msg(1, 2));
  push(0, worlds::Message::empty());
  push(0, nav_msg(1, 2));
  push(0, nav_msg(4, 1));
  push(1, nav_msg(1, 2));
  push(2, worlds::Message::empty());
  const auto g = game_instructions(s);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].length, 3.0);
  EXPECT_EQ(g[0].cost, 2.0 + 16.0);
  EXPECT_EQ(g[1].length, 2.0);
  EXPECT_EQ(g[2].length, 0.0);
  EXPECT_EQ(g[2].cost, 0.0);

  s.points = 2;
  const std::vector<SessionResult> ss{s};
  const auto row = cost_points_row("tom", 1.0, ss);
  EXPECT_NEAR(row.instruction_length, 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(row.level_share[0], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(row.level_share[1], 3.0 / 6.0, 1e-12);
  EXPECT_NEAR(row.step_cost, (3 * 2.0 + 16.0) / 6.0, 1e-12);
  EXPECT_EQ(row.points, 2.0);
}

TEST(Report, SvgAndCsvShapes) {
  Rng rng(9);
  std::vector<SessionResult> s;
  for (int i = 0; i < 30; ++i) s.push_back(bernoulli_session(rng, 20, 0.4, 0.6));
  const std::vector<Series> series{{"tom", adaptation_curve(s, rng)}, {"a<b", adaptation_curve(s, rng)}};
  const auto svg = curve_svg(series, "accuracy", "p");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_GT(std::count(svg.begin(), svg.end(), '\n'), 10);
  const auto csv = curves_csv(series);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,tom_mean,tom_lo,tom_hi,a<b_mean,a<b_lo,a<b_hi");
  const auto sc = scatter_svg({{"x", 1, 2}, {"y", 3, 4}}, "t", "len", "points");
  EXPECT_NE(sc.find("<circle"), std::string::npos);
  EXPECT_THROW(write_text("/proc/nonexistent/x.svg", svg), std::runtime_error);
}

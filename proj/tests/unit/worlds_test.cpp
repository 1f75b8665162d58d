#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>

#include "tomcoord/worlds/navigation.hpp"
#include "tomcoord/worlds/referential.hpp"

using namespace tomcoord;
using namespace tomcoord::worlds;

TEST(RefGame, SeedIsReplayable) {
  const auto a = sample_ref_game(std::uint64_t{7});
  const auto b = sample_ref_game(std::uint64_t{7});
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.candidates, b.candidates);
}

TEST(RefGame, Share2PolicyHoldsOnEveryGame) {
  Rng rng(11);
  for (int g = 0; g < 2000; ++g) {
    const auto game = sample_ref_game(rng, DistractorPolicy::share2);
    const auto& target = game.candidates[game.target];
    std::set<int> ids;
    for (int i = 0; i < kNumCandidates; ++i) {
      ids.insert(game.candidates[i].id());
      if (i != game.target) {
        EXPECT_GE(game.candidates[i].shared_with(target), 2);
      }
    }
    EXPECT_EQ(ids.size(), 10u);
  }
}

TEST(RefGame, UniformPolicyReachesDissimilarObjects) {
  Rng rng(12);
  int dissimilar = 0;
  for (int g = 0; g < 200; ++g) {
    const auto game = sample_ref_game(rng, DistractorPolicy::uniform);
    for (int i = 0; i < kNumCandidates; ++i) {
      dissimilar += game.candidates[i].shared_with(game.candidates[game.target]) < 2;
    }
  }
  EXPECT_GT(dissimilar, 1000);
}

TEST(RefGame, TargetIndexCoversAllSlots) {
  Rng rng(13);
  std::array<int, kNumCandidates> hits{};
  for (int g = 0; g < 1000; ++g) ++hits[sample_ref_game(rng).target];
  for (int h : hits) EXPECT_GT(h, 50);
}

TEST(Describe, FullDescriptionInLanguageZero) {
  const auto lex = make_lexicons();
  const ObjectFeature o{{1, 0, 2, 0}};
  const auto m = describe(o, lex[0], 0);
  EXPECT_EQ(m.tokens, (std::vector<int>{1, 6, 14, 15}));
  EXPECT_EQ(m.tag, 0);
}

TEST(Describe, FiveDistinctVariants) {
  const auto lex = make_lexicons();
  const ObjectFeature o{{3, 4, 1, 2}};
  std::set<std::vector<int>> seen;
  for (int v = 0; v < kNumVariants; ++v) seen.insert(describe(o, lex[2], v).tokens);
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_THROW(describe(o, lex[2], 5), std::out_of_range);
}

TEST(Describe, ColorChangeChangesOnlyColorToken) {
  const auto lex = make_lexicons();
  const auto a = describe(ObjectFeature{{0, 2, 1, 1}}, lex[4], 0);
  const auto b = describe(ObjectFeature{{5, 2, 1, 1}}, lex[4], 0);
  ASSERT_EQ(a.tokens.size(), b.tokens.size());
  EXPECT_NE(a.tokens[0], b.tokens[0]);
  for (std::size_t i = 1; i < a.tokens.size(); ++i) EXPECT_EQ(a.tokens[i], b.tokens[i]);
}

TEST(Describe, InjectiveOverObjectsLanguagesVariants) {
  const auto lex = make_lexicons();
  std::map<std::vector<int>, std::tuple<int, int, int>> seen;
  std::size_t collisions = 0;
  for (int l = 0; l < kNumLanguages; ++l) {
    for (int id = 0; id < kNumObjects; ++id) {
      const auto m = describe(ObjectFeature::from_id(id), lex[l], 0);
      collisions += !seen.emplace(m.tokens, std::tuple{id, l, 0}).second;
    }
  }
  EXPECT_EQ(collisions, 0u);
  for (int t = 0; t < kRefWords; ++t) EXPECT_EQ(token_language(t), t / 18);
}

TEST(Corpus, DeterministicAndSized) {
  const auto lex = make_lexicons();
  const auto a = gen_caption_corpus(lex[3], 1000, 0);
  const auto b = gen_caption_corpus(lex[3], 1000, 0);
  ASSERT_EQ(a.size(), 1000u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].object, b[i].object);
    EXPECT_EQ(a[i].message, b[i].message);
  }
}

TEST(Corpus, MostFrequentTokenMatchesCount) {
  const auto lex = make_lexicons();
  const auto corpus = gen_caption_corpus(lex[5], 5000, 1);
  std::map<int, int> count;
  for (const auto& p : corpus) {
    for (int t : p.message.tokens) ++count[t];
  }
  const auto best = std::max_element(count.begin(), count.end(), [](auto& x, auto& y) {
    return x.second < y.second || (x.second == y.second && x.first > y.first);
  });
  const auto ranks = rank_tokens(corpus, 5);
  EXPECT_EQ(ranks.front(), best->first);
  // The two most probable values (first size and first pattern) lead.
  const std::set<int> top{lex[5].word_of(2, 0), lex[5].word_of(3, 0)};
  EXPECT_TRUE(top.count(ranks[0]) && top.count(ranks[1]));
}

TEST(Corpus, SeedsShareAttributeLaw) {
  const auto lex = make_lexicons();
  // Chi-square critical values at p = 0.001 for df = 5 and df = 2.
  const double critical[] = {20.52, 20.52, 13.82, 13.82};
  for (std::uint64_t seed : {1u, 2u}) {
    const auto corpus = gen_caption_corpus(lex[0], 4000, seed);
    for (int c = 0; c < kNumAttributes; ++c) {
      std::vector<double> observed(kCardinality[c], 0.0);
      for (const auto& p : corpus) observed[p.object.attr[c]] += 1.0;
      double chi2 = 0.0;
      for (int v = 0; v < kCardinality[c]; ++v) {
        const double e = 4000.0 * attribute_probability(c, v);
        chi2 += (observed[v] - e) * (observed[v] - e) / e;
      }
      EXPECT_LT(chi2, critical[c]) << "seed " << seed << " category " << c;
    }
  }
  const auto c1 = gen_caption_corpus(lex[0], 50, 1);
  const auto c2 = gen_caption_corpus(lex[0], 50, 2);
  bool differ = false;
  for (std::size_t i = 0; i < c1.size(); ++i) differ |= !(c1[i].message == c2[i].message);
  EXPECT_TRUE(differ);
}

TEST(Cost, LevelsAndEmpty) {
  Message task{{0, 6, 10}, 1, MessageKind::navigation};
  Message action{{31}, 4, MessageKind::navigation};
  EXPECT_EQ(cost(task), 2.0);
  EXPECT_EQ(cost(action), 16.0);
  EXPECT_EQ(cost(Message::empty()), 0.0);
  EXPECT_EQ(cost(Message{{1, 2, 3}, 0, MessageKind::referential}), 3.0);
  EXPECT_THROW(cost(Message{{1}, -1, MessageKind::referential}), UntaggedMessage);
}

// ---- navigation ----

namespace {

GridWorld fixed_world() {
  GridWorld w;
  // Entities on the top-left room and beyond; agent at (0, 0).
  const int cells[kNumEntities] = {2, 20, 30, 60, 62, 80, 8, 72, 76, 26, 10, 19, 57};
  for (int e = 0; e < kNumEntities; ++e) w.cell[e] = cells[e];
  w.agent = 0;
  w.task = {TaskType::cool, 0, -1, kFridge, 10};
  return w;
}

// Oracle: breadth-first search over the full joint state.
int bfs_optimal(const GridWorld& start) {
  auto key = [](const GridWorld& w) {
    std::string k;
    k.push_back(static_cast<char>(w.agent));
    k.push_back(static_cast<char>(w.held + 1));
    for (int o = 0; o < kNumObjects6; ++o) {
      k.push_back(static_cast<char>(w.cell[o] + 1));
      k.push_back(static_cast<char>(w.flags[o]));
    }
    k.push_back(static_cast<char>(w.fridge_open + 2 * w.microwave_open + 4 * w.lamp_on));
    return k;
  };
  std::unordered_map<std::string, int> dist;
  std::deque<GridWorld> q{start};
  dist[key(start)] = 0;
  while (!q.empty()) {
    GridWorld w = q.front();
    q.pop_front();
    const int d = dist[key(w)];
    for (int a = 0; a < kNumActions; ++a) {
      if (!is_legal(w, a)) continue;
      auto r = nav_step(w, a);
      if (r.success) return d + 1;
      r.world.steps = 0;
      r.world.done = false;
      if (dist.emplace(key(r.world), d + 1).second) q.push_back(r.world);
    }
  }
  return -1;
}

}  // namespace

TEST(NavStep, MoveIntoWallIsIllegalNoOp) {
  GridWorld w = fixed_world();
  const auto r = nav_step(w, kMoveN);  // top edge
  EXPECT_TRUE(r.illegal);
  EXPECT_EQ(r.world.agent, w.agent);
  EXPECT_EQ(r.world.steps, 1);
  w.agent = 3;  // (3,0) next to the interior wall at x = 4
  EXPECT_TRUE(nav_step(w, kMoveE).illegal);
}

TEST(NavStep, ScriptedCoolTrajectorySucceeds) {
  GridWorld w = fixed_world();
  // Pick object 0 at (2,0), cool it in the fridge at (8,0), put it on the
  // table at (1,1).
  const std::vector<int> script = {kMoveE, kMoveE, kPickup, kMoveS, kMoveS, kMoveE, kMoveE,
                                   kMoveE, kMoveE, kMoveE, kMoveE, kMoveN, kMoveN, kOpen,
                                   kToggle};
  for (int a : script) {
    const auto r = nav_step(w, a);
    ASSERT_FALSE(r.illegal) << "action " << a << " at cell " << w.agent;
    w = r.world;
  }
  EXPECT_TRUE(w.flags[0] & kCold);
  // The walk back to the table would exceed the game cap, so start a fresh
  // step count and let the planner finish.
  w.steps = 0;
  int guard = 0;
  while (!w.done && guard++ < 30) w = nav_step(w, plan_next(w).action).world;
  EXPECT_TRUE(w.success);
}

TEST(NavStep, TwentyStepsWithoutCompletionFails) {
  GridWorld w = fixed_world();
  StepResult r{w};
  for (int i = 0; i < kMaxGameSteps; ++i) {
    ASSERT_FALSE(r.done);
    r = nav_step(r.world, i % 2 ? kMoveW : kMoveE);
  }
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.success);
}

TEST(NavStep, PureFunctionReplay) {
  Rng rng(5);
  const GridWorld start = sample_nav_game(rng);
  std::vector<int> actions;
  for (int i = 0; i < 15; ++i) actions.push_back(static_cast<int>(uniform_index(rng, kNumActions)));
  GridWorld a = start, b = start;
  for (int act : actions) {
    a = nav_step(a, act).world;
    b = nav_step(b, act).world;
    EXPECT_EQ(a, b);
  }
}

TEST(Expert, ReplaySucceedsForEveryTaskType) {
  Rng rng(21);
  for (int t = 0; t < kNumTaskTypes; ++t) {
    for (int rep = 0; rep < 30; ++rep) {
      const GridWorld start = sample_nav_game(rng, static_cast<TaskType>(t));
      const auto plan = expert_plan(start);
      EXPECT_GE(plan.trajectory.size(), 6u);
      EXPECT_LE(plan.trajectory.size(), 17u);
      GridWorld w = start;
      StepResult r{w};
      for (int a : plan.trajectory) {
        r = nav_step(r.world, a);
        ASSERT_FALSE(r.illegal);
      }
      EXPECT_TRUE(r.done && r.success);
    }
  }
}

TEST(Expert, MatchesBreadthFirstOptimum) {
  Rng rng(22);
  for (int t = 0; t < kNumTaskTypes; ++t) {
    for (int rep = 0; rep < 4; ++rep) {
      const GridWorld start = sample_nav_game(rng, static_cast<TaskType>(t), 6, 12);
      EXPECT_EQ(static_cast<int>(expert_plan(start).trajectory.size()), bfs_optimal(start))
          << "task type " << t;
    }
  }
}

TEST(Expert, RecoversFromRandomDeviations) {
  Rng rng(23);
  for (int rep = 0; rep < 300; ++rep) {
    GridWorld w = sample_nav_game(rng);
    for (int i = 0; i < 12; ++i) {
      const auto legal = legal_actions(w);
      std::vector<int> options;
      for (int a = 0; a < kNumActions; ++a) {
        if (legal[a]) options.push_back(a);
      }
      auto r = nav_step(w, options[uniform_index(rng, options.size())]);
      if (r.success) break;
      w = r.world;
      w.done = false;
    }
    if (task_satisfied(w)) continue;
    EXPECT_NO_THROW(expert_plan(w)) << rep;
  }
}

TEST(Expert, InstructionLevelsByConstruction) {
  Rng rng(24);
  for (int rep = 0; rep < 20; ++rep) {
    const auto plan = expert_plan(sample_nav_game(rng));
    for (std::size_t t = 0; t < plan.trajectory.size(); ++t) {
      const auto& lv = plan.levels[t];
      EXPECT_EQ(lv[3].tokens, std::vector<int>{kActionToken0 + plan.trajectory[t]});
      EXPECT_EQ(lv[0], plan.levels[0][0]);
      for (int i = 0; i < kNumLevels; ++i) {
        EXPECT_EQ(lv[i].tag, i + 1);
        EXPECT_FALSE(lv[i].tokens.empty());
        for (int tok : lv[i].tokens) EXPECT_LT(tok, kNavWords);
      }
    }
  }
}

TEST(Features, ProgressMarksShorteningMoves) {
  GridWorld w = fixed_world();
  const auto f = nav_features(w);
  // From (0,0), moving east shortens the way to object 0 at (2,0).
  EXPECT_EQ(f.action[kMoveE * kNavActionDim + kNumActions + 0], 1.0);
  EXPECT_EQ(f.action[kMoveS * kNavActionDim + kNumActions + 0], 0.0);
  EXPECT_FALSE(f.legal[kMoveN]);
  EXPECT_FALSE(f.legal[kPickup]);
  EXPECT_EQ(f.global[kNumEntities + 0], 1.0);  // empty hand
}

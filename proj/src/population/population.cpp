#include "tomcoord/population/population.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

namespace tomcoord::population {

using namespace worlds;
using agents::ListenerModel;
using agents::NetConfig;
using ad::Tensor;
using ad::Var;

std::string to_string(EnvKind kind) {
  return kind == EnvKind::referential ? "referential" : "navigation";
}

EnvKind env_kind_from_string(const std::string& s) {
  if (s == "referential") return EnvKind::referential;
  if (s == "navigation") return EnvKind::navigation;
  throw std::invalid_argument("unknown environment kind '" + s + "'");
}

std::span<const double> ListenerSpec::level_weights(TaskType t) const {
  if (env != EnvKind::navigation) throw std::logic_error("level_weights: not a navigation listener");
  return std::span<const double>(weights).subspan(static_cast<std::size_t>(t) * kNumLevels, kNumLevels);
}

PopulationOptions default_options(EnvKind kind) {
  PopulationOptions o;
  if (kind == EnvKind::navigation) {
    o.ratio = {3, 1, 1};
    o.vocab_budget = 0;
  }
  return o;
}

ListenerTrainOptions default_train_options(EnvKind kind) {
  ListenerTrainOptions o;
  if (kind == EnvKind::navigation) o.lr = 0.01;
  return o;
}

std::vector<std::vector<int>> RefCorpora::ranked() const {
  std::vector<std::vector<int>> out;
  for (const auto& l : lexicons) out.push_back(l.ranked_tokens);
  return out;
}

RefCorpora make_ref_corpora(std::size_t per_language, std::uint64_t seed) {
  RefCorpora c;
  c.lexicons = make_lexicons();
  for (auto& lex : c.lexicons) {
    c.captions.push_back(gen_caption_corpus(lex, per_language, seed));
    lex.ranked_tokens = rank_tokens(c.captions.back(), lex.language);
  }
  return c;
}

std::array<int, 3> split_sizes(int n, const std::array<int, 3>& ratio) {
  const int total = ratio[0] + ratio[1] + ratio[2];
  if (n < 3) throw std::invalid_argument("population needs at least 3 listeners");
  if (ratio[0] <= 0 || ratio[1] < 0 || ratio[2] < 0) throw std::invalid_argument("bad split ratio");
  const int val = std::max(1, n * ratio[1] / total);
  const int test = std::max(1, n * ratio[2] / total);
  return {n - val - test, val, test};
}

std::vector<int> build_vocab(std::span<const double> weights, int budget,
                             const std::vector<std::vector<int>>& ranked) {
  if (weights.size() != ranked.size()) throw std::invalid_argument("build_vocab: weight/corpus mismatch");
  std::size_t capacity = 0;
  for (const auto& r : ranked) capacity += r.size();
  if (budget < 0 || static_cast<std::size_t>(budget) > capacity) {
    throw std::invalid_argument("build_vocab: budget exceeds total vocabulary");
  }
  std::vector<std::size_t> take(weights.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    take[i] = std::min(ranked[i].size(),
                       static_cast<std::size_t>(std::floor(budget * weights[i] + 1e-9)));
    used += take[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  for (std::size_t k = 0; used < static_cast<std::size_t>(budget); k = (k + 1) % order.size()) {
    const std::size_t i = order[k];
    const std::size_t room = ranked[i].size() - take[i];
    const std::size_t add = std::min(room, static_cast<std::size_t>(budget) - used);
    take[i] += add;
    used += add;
  }
  std::vector<int> vocab;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    vocab.insert(vocab.end(), ranked[i].begin(), ranked[i].begin() + static_cast<std::ptrdiff_t>(take[i]));
  }
  std::sort(vocab.begin(), vocab.end());
  return vocab;
}

std::vector<int> token_map_for(const std::vector<int>& vocab) {
  std::vector<int> map(kRefVocab, kRefUnk);
  for (int t : vocab) map[static_cast<std::size_t>(t)] = t;
  return map;
}

PopulationManifest sample_population(EnvKind kind, int n, const std::vector<double>& alpha,
                                     std::uint64_t seed, const PopulationOptions& opt,
                                     const RefCorpora* corpora) {
  const std::size_t dim = kind == EnvKind::referential ? kNumLanguages : kNumLevels;
  if (alpha.size() != dim) {
    throw InvalidAlpha("alpha must have " + std::to_string(dim) + " entries for " + to_string(kind));
  }
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InvalidAlpha("alpha entries must be positive and finite");
  }
  if (kind == EnvKind::referential && corpora == nullptr) {
    throw std::invalid_argument("referential population needs corpora for vocabularies");
  }
  const auto sizes = split_sizes(n, opt.ratio);

  PopulationManifest m;
  m.env = kind;
  m.seed = seed;
  m.vocab_budget = kind == EnvKind::referential ? opt.vocab_budget : 0;
  m.alpha = alpha;
  Rng rng = substream(seed, "population");
  const auto ranked = corpora != nullptr ? corpora->ranked() : std::vector<std::vector<int>>{};
  for (int i = 0; i < n; ++i) {
    ListenerSpec s;
    s.id = i;
    s.env = kind;
    const int blocks = kind == EnvKind::referential ? 1 : kNumTaskTypes;
    for (int b = 0; b < blocks; ++b) {
      const auto w = sample_dirichlet(rng, alpha);
      s.weights.insert(s.weights.end(), w.begin(), w.end());
    }
    if (kind == EnvKind::referential) s.vocab = build_vocab(s.weights, m.vocab_budget, ranked);
    s.train_seed = substream_seed(seed, "listener", static_cast<std::uint64_t>(i));
    m.specs.push_back(std::move(s));
  }
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  Rng split_rng = substream(seed, "split");
  shuffle(split_rng, ids);
  const auto cut1 = ids.begin() + sizes[0];
  const auto cut2 = cut1 + sizes[1];
  m.split.train.assign(ids.begin(), cut1);
  m.split.val.assign(cut1, cut2);
  m.split.test.assign(cut2, ids.end());
  for (auto* v : {&m.split.train, &m.split.val, &m.split.test}) std::sort(v->begin(), v->end());
  return m;
}

std::vector<Interaction> build_ref_training_set(const ListenerSpec& spec, const RefCorpora& corpora) {
  const std::set<int> vocab(spec.vocab.begin(), spec.vocab.end());
  Rng rng = substream(spec.train_seed, "ref-dataset");
  std::vector<Interaction> out;
  for (const auto& corpus : corpora.captions) {
    for (const auto& pair : corpus) {
      const auto oov = std::count_if(pair.message.tokens.begin(), pair.message.tokens.end(),
                                     [&](int t) { return !vocab.contains(t); });
      if (oov > 1) continue;
      const RefGame g = sample_ref_game_for(rng, pair.object);
      out.push_back({agents::make_observation(g), pair.message, g.target});
    }
  }
  if (out.empty()) {
    throw EmptyDataset("listener " + std::to_string(spec.id) + ": no captions left after vocabulary filter");
  }
  return out;
}

std::vector<Interaction> build_nav_training_set(const ListenerSpec& spec, int games_per_task) {
  Rng rng = substream(spec.train_seed, "nav-dataset");
  std::vector<Interaction> out;
  for (int t = 0; t < kNumTaskTypes; ++t) {
    const auto type = static_cast<TaskType>(t);
    const auto w = spec.level_weights(type);
    const std::vector<double> weights(w.begin(), w.end());
    for (int g = 0; g < games_per_task; ++g) {
      GridWorld world = sample_nav_game(rng, type);
      const ExpertPlan plan = expert_plan(world);
      for (std::size_t k = 0; k < plan.trajectory.size(); ++k) {
        const auto level = sample_discrete(rng, weights);
        out.push_back({agents::make_observation(world), plan.levels[k][level], plan.trajectory[k]});
        world = nav_step(world, plan.trajectory[k]).world;
      }
    }
  }
  if (out.empty()) throw EmptyDataset("listener " + std::to_string(spec.id) + ": empty navigation dataset");
  return out;
}

ListenerModel listener_shell(const ListenerSpec& spec) {
  ListenerModel m;
  if (spec.env == EnvKind::referential) {
    m.cfg = agents::referential_config();
    m.token_map = token_map_for(spec.vocab);
  } else {
    m.cfg = agents::navigation_config();
  }
  return m;
}

double accuracy(const ListenerModel& model, std::span<const Interaction> data) {
  if (data.empty()) return 0.0;
  const auto b = agents::make_batch(model.cfg, data, model.map());
  const Tensor lp = agents::log_probs(model.cfg, ad::constants(model.params), b).value();
  const auto A = static_cast<std::size_t>(b.n_actions);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b.size; ++i) {
    std::span<const double> row(lp.data().data() + i * A, A);
    hits += agents::argmax(row) == static_cast<std::size_t>(data[i].action);
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

double step_on(ListenerModel& model, ad::Momentum& optim, const agents::Batch& b) {
  auto fr = ad::forward(
      [&](std::span<const Var> p, std::span<const Var>) {
        return agents::nll(agents::log_probs(model.cfg, p, b), b).loss;
      },
      {}, model.params);
  const double loss = fr.output.item();
  if (std::isfinite(loss)) optim.step(model.params, ad::backward(fr, Tensor::scalar(1.0)));
  return loss;
}

}  // namespace

ListenerModel train_listener(const ListenerSpec& spec, const std::vector<Interaction>& data,
                             const ListenerTrainOptions& opt, const agents::RnnSpeaker* companion,
                             ListenerTrainReport* report) {
  if (data.empty()) throw EmptyDataset("listener " + std::to_string(spec.id) + ": empty dataset");
  ListenerModel model = listener_shell(spec);
  Rng rng = substream(spec.train_seed, "listener-train");
  model.params = agents::init_params(model.cfg, rng);
  ad::Momentum optim(opt.lr, opt.momentum);
  const bool self_play = companion != nullptr && spec.env == EnvKind::referential && opt.self_play > 0.0;
  const double share = self_play ? std::min(opt.self_play, 0.9) : 0.0;

  ListenerTrainReport rep;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double tau = opt.tau;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle(rng, order);
    const std::size_t sup_batches = (data.size() + opt.batch - 1) / opt.batch;
    const auto steps = static_cast<std::size_t>(std::llround(static_cast<double>(sup_batches) / (1.0 - share)));
    double total = 0.0;
    std::size_t next = 0, done = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      double loss = 0.0;
      try {
        if (next < sup_batches && (s - done >= steps - sup_batches || uniform01(rng) >= share)) {
          std::vector<Interaction> batch;
          for (std::size_t i = next * opt.batch; i < std::min(data.size(), (next + 1) * opt.batch); ++i) {
            batch.push_back(data[order[i]]);
          }
          ++next;
          ++rep.supervised_steps;
          loss = step_on(model, optim, agents::make_batch(model.cfg, batch, model.map()));
        } else if (self_play) {
          ++done;
          std::vector<agents::ObsPtr> obs;
          std::vector<agents::SoftMessage> msgs;
          std::vector<int> actions;
          const std::vector<double> w(spec.weights.begin(), spec.weights.end());
          for (std::size_t i = 0; i < opt.batch; ++i) {
            const RefGame g = sample_ref_game(rng);
            const auto lang = static_cast<int>(sample_discrete(rng, w));
            msgs.push_back(agents::gumbel_sample(*companion, g.candidates[static_cast<std::size_t>(g.target)],
                                                 lang, tau, rng));
            obs.push_back(agents::make_observation(g));
            actions.push_back(g.target);
          }
          ++rep.self_play_steps;
          loss = step_on(model, optim, agents::make_soft_batch(model.cfg, obs, msgs, model.map(), actions));
        } else {
          continue;
        }
      } catch (const ad::NonFiniteError&) {
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("listener " + std::to_string(spec.id) + " diverged at epoch " +
                               std::to_string(epoch) + " (seed " + std::to_string(spec.train_seed) + ")");
      }
      total += loss;
    }
    rep.epoch_loss.push_back(total / static_cast<double>(steps));
    tau *= opt.tau_decay;
  }
  rep.train_accuracy = accuracy(model, data);
  if (report != nullptr) *report = std::move(rep);
  return model;
}

std::string manifest_to_json(const PopulationManifest& m) {
  nlohmann::ordered_json j;
  j["env"] = to_string(m.env);
  j["seed"] = m.seed;
  j["vocab_budget"] = m.vocab_budget;
  j["alpha"] = m.alpha;
  j["split"] = {{"train", m.split.train}, {"val", m.split.val}, {"test", m.split.test}};
  auto& specs = j["specs"] = nlohmann::ordered_json::array();
  for (const auto& s : m.specs) {
    specs.push_back({{"id", s.id}, {"weights", s.weights}, {"vocab", s.vocab}, {"train_seed", s.train_seed}});
  }
  return j.dump(2) + "\n";
}

PopulationManifest manifest_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PopulationManifest m;
  m.env = env_kind_from_string(j.at("env").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.vocab_budget = j.at("vocab_budget").get<int>();
  m.alpha = j.at("alpha").get<std::vector<double>>();
  m.split.train = j.at("split").at("train").get<std::vector<int>>();
  m.split.val = j.at("split").at("val").get<std::vector<int>>();
  m.split.test = j.at("split").at("test").get<std::vector<int>>();
  for (const auto& s : j.at("specs")) {
    ListenerSpec spec;
    spec.id = s.at("id").get<int>();
    spec.env = m.env;
    spec.weights = s.at("weights").get<std::vector<double>>();
    spec.vocab = s.at("vocab").get<std::vector<int>>();
    spec.train_seed = s.at("train_seed").get<std::uint64_t>();
    m.specs.push_back(std::move(spec));
  }
  return m;
}

}  // namespace tomcoord::population

#include "tomcoord/agents/listener.hpp"

#include <cmath>
#include <stdexcept>

namespace tomcoord::agents {

using namespace ad;

namespace {

constexpr double kMasked = -1e9;
const double kLogFloor = std::log(1e-12);

enum Seg : std::size_t { kEmbed, kGate, kEnc1W, kEnc1B, kEnc2W, kEnc2B, kCtx1W, kCtx1B, kCtx2W, kCtx2B };

std::size_t cand_segment(const NetConfig& cfg) { return cfg.global_dim > 0 ? 10 : 6; }
std::size_t token_gate_segment(const NetConfig& cfg) { return cand_segment(cfg) + 1; }

int gate_row(const NetConfig& cfg, const Message& m, int token) {
  if (token == cfg.unk()) return cfg.n_tags;
  const int row = m.tag - cfg.tag_base;
  if (row < 0 || row >= cfg.n_tags) {
    throw std::invalid_argument("message tag outside the network's tag range");
  }
  return row;
}

void fill_observation_part(const NetConfig& cfg, Batch& b, std::span<const ObsPtr> obs) {
  const std::size_t B = obs.size(), A = static_cast<std::size_t>(cfg.n_actions);
  b.size = B;
  b.n_actions = cfg.n_actions;
  std::vector<double> cand, global, mask;
  cand.reserve(B * A * cfg.cand_dim);
  global.reserve(B * cfg.global_dim);
  mask.reserve(B * A);
  for (std::size_t i = 0; i < B; ++i) {
    const Observation& o = *obs[i];
    if (o.n_actions != cfg.n_actions || o.cand.size() != A * cfg.cand_dim ||
        o.global.size() != static_cast<std::size_t>(cfg.global_dim) || o.legal.size() != A) {
      throw ShapeError("observation does not match the network configuration");
    }
    bool any = false;
    for (std::size_t a = 0; a < A; ++a) {
      mask.push_back(o.legal[a] ? 0.0 : kMasked);
      any = any || o.legal[a];
      b.expand.push_back(i);
    }
    if (!any) throw std::invalid_argument("empty observation: no legal action");
    cand.insert(cand.end(), o.cand.begin(), o.cand.end());
    global.insert(global.end(), o.global.begin(), o.global.end());
  }
  b.cand = Tensor({B * A, static_cast<std::size_t>(cfg.cand_dim)}, std::move(cand));
  b.global = Tensor({B, static_cast<std::size_t>(cfg.global_dim)}, std::move(global));
  b.mask = Tensor({B, A}, std::move(mask));
}

Batch build(const NetConfig& cfg, std::span<const ObsPtr> obs,
            std::span<const Message* const> messages, const std::vector<int>* map) {
  Batch b;
  fill_observation_part(cfg, b, obs);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const Message* m : messages) {
    const std::size_t begin = b.tokens.size();
    for (int t : m->tokens) {
      if (t < 0 || t >= cfg.vocab) throw std::out_of_range("token outside vocabulary");
      const int mt = map ? (*map)[static_cast<std::size_t>(t)] : t;
      b.tokens.push_back(static_cast<std::size_t>(mt));
      b.gate_rows.push_back(static_cast<std::size_t>(gate_row(cfg, *m, mt)));
    }
    spans.emplace_back(begin, b.tokens.size());
  }
  const std::size_t n_tok = b.tokens.size();
  b.pool = Tensor::zeros({b.size, std::max<std::size_t>(n_tok, 1)});
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto [lo, hi] = spans[i];
    for (std::size_t k = lo; k < hi; ++k) b.pool.at(i, k) = 1.0 / static_cast<double>(hi - lo);
  }
  return b;
}

}  // namespace

NetConfig referential_config(int d) {
  NetConfig c;
  c.d = d;
  return c;
}

NetConfig navigation_config(int d) {
  NetConfig c;
  c.vocab = worlds::kNavVocab;
  c.n_tags = worlds::kNumLevels;
  c.tag_base = 1;
  c.d = d;
  c.cand_dim = worlds::kNavActionDim;
  c.global_dim = worlds::kNavGlobalDim;
  c.n_actions = worlds::kNumActions;
  return c;
}

ObsPtr make_observation(const worlds::RefGame& game) {
  auto o = std::make_shared<Observation>();
  o->n_actions = worlds::kNumCandidates;
  o->legal.assign(worlds::kNumCandidates, true);
  for (const auto& c : game.candidates) {
    const auto h = worlds::multi_hot(c);
    o->cand.insert(o->cand.end(), h.begin(), h.end());
  }
  return o;
}

ObsPtr make_observation(const worlds::GridWorld& world) {
  const auto f = worlds::nav_features(world);
  auto o = std::make_shared<Observation>();
  o->n_actions = worlds::kNumActions;
  o->cand.assign(f.action.begin(), f.action.end());
  o->global.assign(f.global.begin(), f.global.end());
  o->legal.assign(f.legal.begin(), f.legal.end());
  return o;
}

Batch make_batch(const NetConfig& cfg, std::span<const Query> queries,
                 const std::vector<int>* token_map) {
  std::vector<ObsPtr> obs;
  std::vector<const Message*> msgs;
  for (const auto& q : queries) {
    obs.push_back(q.obs);
    msgs.push_back(q.message);
  }
  return build(cfg, obs, msgs, token_map);
}

Batch make_batch(const NetConfig& cfg, std::span<const Interaction> records,
                 const std::vector<int>* token_map) {
  std::vector<ObsPtr> obs;
  std::vector<const Message*> msgs;
  for (const auto& r : records) {
    obs.push_back(r.obs);
    msgs.push_back(&r.message);
  }
  Batch b = build(cfg, obs, msgs, token_map);
  for (const auto& r : records) b.actions.push_back(r.action);
  return b;
}

Batch make_soft_batch(const NetConfig& cfg, std::span<const ObsPtr> obs,
                      std::span<const SoftMessage> messages, const std::vector<int>* map,
                      std::span<const int> actions) {
  Batch b;
  fill_observation_part(cfg, b, obs);
  b.is_soft = true;
  const auto V = static_cast<std::size_t>(cfg.vocab);
  const auto R = static_cast<std::size_t>(cfg.n_tags + 1);
  std::vector<double> soft, mix;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t n_tok = 0;
  for (const auto& m : messages) {
    const int row = m.tag - cfg.tag_base;
    if (row < 0 || row >= cfg.n_tags) throw std::invalid_argument("soft message tag out of range");
    spans.emplace_back(n_tok, n_tok + m.positions.size());
    for (const auto& p : m.positions) {
      if (p.size() != V) throw ShapeError("soft token width differs from vocabulary");
      std::vector<double> mapped(V, 0.0);
      for (std::size_t t = 0; t < V; ++t) mapped[map ? static_cast<std::size_t>((*map)[t]) : t] += p[t];
      const double unk_mass = mapped[V - 1];
      soft.insert(soft.end(), mapped.begin(), mapped.end());
      std::vector<double> r(R, 0.0);
      r[static_cast<std::size_t>(row)] = 1.0 - unk_mass;
      r[R - 1] = unk_mass;
      mix.insert(mix.end(), r.begin(), r.end());
      ++n_tok;
    }
  }
  b.soft = Tensor({n_tok, V}, std::move(soft));
  b.gate_mix = Tensor({n_tok, R}, std::move(mix));
  b.pool = Tensor::zeros({b.size, std::max<std::size_t>(n_tok, 1)});
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto [lo, hi] = spans[i];
    for (std::size_t k = lo; k < hi; ++k) b.pool.at(i, k) = 1.0 / static_cast<double>(hi - lo);
  }
  b.actions.assign(actions.begin(), actions.end());
  return b;
}

namespace {

Tensor normal_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t = Tensor::zeros({r, c});
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace

ParamVector init_params(const NetConfig& cfg, Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  ParamVector p;
  p.add("embed", normal_matrix(rng, static_cast<std::size_t>(cfg.vocab), d, 1.0));
  p.add("gate", Tensor::full({static_cast<std::size_t>(cfg.n_tags + 1), d}, 1.0));
  p.add("enc1.w", normal_matrix(rng, d, d, sd));
  p.add("enc1.b", Tensor::zeros({1, d}));
  p.add("enc2.w", normal_matrix(rng, d, d, sd));
  p.add("enc2.b", Tensor::zeros({1, d}));
  if (cfg.global_dim > 0) {
    const auto in = d + static_cast<std::size_t>(cfg.global_dim);
    p.add("ctx1.w", normal_matrix(rng, in, h, 1.0 / std::sqrt(static_cast<double>(in))));
    p.add("ctx1.b", Tensor::zeros({1, h}));
    p.add("ctx2.w", normal_matrix(rng, h, d, 1.0 / std::sqrt(static_cast<double>(h))));
    p.add("ctx2.b", Tensor::zeros({1, d}));
  }
  p.add("cand.w", normal_matrix(rng, static_cast<std::size_t>(cfg.cand_dim), d,
                                1.0 / std::sqrt(static_cast<double>(cfg.cand_dim))));
  p.add("tok.gate", Tensor::full({static_cast<std::size_t>(cfg.vocab), 1}, 1.0));
  return p;
}

ParamVector zero_params(const NetConfig& cfg) {
  Rng rng(0);
  return init_params(cfg, rng).zeros_like();
}

Var log_probs(const NetConfig& cfg, std::span<const Var> p, const Batch& b) {
  Var x;
  if (b.is_soft) {
    const Var soft = Var::constant(b.soft);
    x = mul(mul(matmul(soft, p[kEmbed]), matmul(Var::constant(b.gate_mix), p[kGate])),
            matmul(soft, p[token_gate_segment(cfg)]));
  } else if (!b.tokens.empty()) {
    x = mul(mul(gather_rows(p[kEmbed], b.tokens), gather_rows(p[kGate], b.gate_rows)),
            gather_rows(p[token_gate_segment(cfg)], b.tokens));
  } else {
    x = Var::constant(Tensor::zeros({1, static_cast<std::size_t>(cfg.d)}));
  }
  const Var pooled = matmul(Var::constant(b.pool), x);
  const Var h1 = tanh(add(matmul(pooled, p[kEnc1W]), p[kEnc1B]));
  Var h = add(matmul(h1, p[kEnc2W]), p[kEnc2B]);
  if (cfg.global_dim > 0) {
    const Var u = concat(h, Var::constant(b.global), Axis::cols);
    const Var c1 = tanh(add(matmul(u, p[kCtx1W]), p[kCtx1B]));
    h = add(matmul(c1, p[kCtx2W]), p[kCtx2B]);
  }
  const Var cand = matmul(Var::constant(b.cand), p[cand_segment(cfg)]);
  const Var scores = sum(mul(gather_rows(h, b.expand), cand), Axis::cols);
  const Var logits = add(reshape(scores, {b.size, static_cast<std::size_t>(b.n_actions)}),
                         Var::constant(b.mask));
  return log_softmax(logits);
}

NllResult nll(const Var& lp, const Batch& b) {
  if (b.size == 0 || b.actions.size() != b.size) {
    throw std::invalid_argument("nll: batch empty or missing gold actions");
  }
  NllResult r;
  const auto A = static_cast<std::size_t>(b.n_actions);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < b.size; ++i) {
    const std::size_t k = i * A + static_cast<std::size_t>(b.actions[i]);
    if (lp.value()[k] < kLogFloor) {
      ++r.clamped;
    } else {
      idx.push_back(k);
    }
  }
  const double n = static_cast<double>(b.size);
  const Var clamp_part = Var::constant(Tensor::scalar(-kLogFloor * static_cast<double>(r.clamped) / n));
  if (idx.empty()) {
    r.loss = clamp_part;
    return r;
  }
  const std::size_t m = idx.size();
  const Var picked = gather(lp, std::move(idx), {1, m});
  r.loss = add(scale(sum(picked), -1.0 / n), clamp_part);
  return r;
}

std::vector<std::vector<double>> action_probs(const ListenerModel& model, const ObsPtr& obs,
                                              std::span<const Message> messages) {
  std::vector<Query> qs;
  qs.reserve(messages.size());
  for (const auto& m : messages) qs.push_back({obs, &m});
  const Batch b = make_batch(model.cfg, qs, model.map());
  const auto params = constants(model.params);
  const Tensor lp = log_probs(model.cfg, params, b).value();
  std::vector<std::vector<double>> out(b.size, std::vector<double>(static_cast<std::size_t>(b.n_actions)));
  for (std::size_t i = 0; i < b.size; ++i) {
    for (std::size_t a = 0; a < out[i].size(); ++a) out[i][a] = std::exp(lp.at(i, a));
  }
  return out;
}

std::vector<double> action_probs(const ListenerModel& model, const ObsPtr& obs,
                                 const Message& message) {
  return action_probs(model, obs, std::span(&message, 1)).front();
}

std::size_t argmax(std::span<const double> xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

int act(const std::vector<double>& probs, ActMode mode, Rng* rng) {
  if (mode == ActMode::greedy) return static_cast<int>(argmax(probs));
  if (!rng) throw std::invalid_argument("act: sampling needs an rng");
  return static_cast<int>(sample_discrete(*rng, probs));
}

int act(const ListenerModel& model, const ObsPtr& obs, const Message& m, ActMode mode, Rng* rng) {
  return act(action_probs(model, obs, m), mode, rng);
}

}  // namespace tomcoord::agents

#include "tomcoord/agents/tom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tomcoord/util/parallel.hpp"

namespace tomcoord::agents {

ToMState init_tom(const NetConfig& cfg, Rng& rng, double inner_lr, int n_inner) {
  ToMState t;
  t.cfg = cfg;
  t.theta = init_params(cfg, rng);
  t.inner_lrs.assign(t.theta.num_segments(), inner_lr);
  t.n_inner = n_inner;
  return t;
}

void set_inner_lrs(ToMState& tom, double gate, double other) {
  tom.inner_lrs.resize(tom.theta.num_segments());
  for (std::size_t i = 0; i < tom.inner_lrs.size(); ++i) {
    const auto& name = tom.theta.segment(i).name;
    tom.inner_lrs[i] = name == "gate" || name == "tok.gate" ? gate : other;
  }
}

ParamVector adapt(const ToMState& tom, std::span<const Interaction> support) {
  if (support.empty() || tom.n_inner <= 0) return tom.theta;
  const Batch b = make_batch(tom.cfg, support);
  ParamVector p = tom.theta;
  for (int i = 0; i < tom.n_inner; ++i) {
    auto fr = ad::forward(
        [&](std::span<const Var> v, std::span<const Var>) { return nll(log_probs(tom.cfg, v, b), b).loss; },
        {}, p);
    if (!std::isfinite(fr.output.item())) throw NonFiniteLoss("adapt: non-finite support loss");
    p = ad::sgd_step(p, ad::backward(fr, Tensor::scalar(1.0)), tom.inner_lrs);
  }
  return p;
}

ListenerModel adapted_listener(const ToMState& tom, std::span<const Interaction> support) {
  return ListenerModel{tom.cfg, adapt(tom, support), {}};
}

std::vector<std::vector<double>> predict(const ToMState& tom, std::span<const Interaction> support,
                                         const ObsPtr& obs, std::span<const Message> messages) {
  return action_probs(adapted_listener(tom, support), obs, messages);
}

namespace {

// Target NLL of one episode recorded on `tape`, adapting from the bound
// parameters with the bound learning rates.
Var episode_loss(ad::Tape& tape, const ToMState& tom, std::span<const Var> theta, std::span<const Var> lrs,
                 const Episode& ep, MetaMode mode) {
  std::vector<Var> p(theta.begin(), theta.end());
  if (!ep.support.empty()) {
    const Batch sb = make_batch(tom.cfg, ep.support);
    for (int i = 0; i < tom.n_inner; ++i) {
      const Var l = nll(log_probs(tom.cfg, p, sb), sb).loss;
      std::vector<Var> g = tape.gradient(l, p, nullptr, mode == MetaMode::exact);
      if (mode == MetaMode::first_order) {
        for (auto& gi : g) gi = Var::constant(gi.value());
      }
      p = ad::sgd_step(p, g, lrs);
    }
  }
  const Batch tb = make_batch(tom.cfg, std::span(&ep.target, 1));
  return nll(log_probs(tom.cfg, p, tb), tb).loss;
}

}  // namespace

MetaGradient meta_loss(const ToMState& tom, std::span<const Episode> episodes, MetaMode mode) {
  if (episodes.empty()) throw std::invalid_argument("meta_loss: no episodes");
  const std::size_t S = tom.theta.num_segments();
  struct Part {
    double loss = 0.0;
    ParamVector g;
    std::vector<double> glr;
  };
  std::vector<Part> parts(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t e) {
    ad::Tape tape;
    const auto theta = ad::bind(tape, tom.theta);
    std::vector<Var> lrs;
    for (double lr : tom.inner_lrs) lrs.push_back(tape.variable(Tensor::scalar(lr)));
    const Var loss = episode_loss(tape, tom, theta, lrs, episodes[e], mode);
    std::vector<Var> wrt = theta;
    wrt.insert(wrt.end(), lrs.begin(), lrs.end());
    const auto grads = tape.gradient(loss, wrt);
    parts[e].loss = loss.value().item();
    parts[e].g = ad::unbind(tom.theta, std::span(grads).first(S));
    for (std::size_t i = 0; i < S; ++i) parts[e].glr.push_back(grads[S + i].value().item());
  });
  MetaGradient out;
  out.grad_theta = tom.theta.zeros_like();
  out.grad_lrs.assign(S, 0.0);
  const double inv = 1.0 / static_cast<double>(episodes.size());
  for (const auto& part : parts) {
    out.loss += part.loss * inv;
    for (std::size_t s = 0; s < S; ++s) {
      auto dst = out.grad_theta.segment(s).value.data();
      auto src = part.g.segment(s).value.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] * inv;
      out.grad_lrs[s] += part.glr[s] * inv;
    }
  }
  return out;
}

Episode sample_episode(const std::vector<Interaction>& records, int max_support, Rng& rng) {
  if (records.size() < 2) throw std::invalid_argument("sample_episode: need at least two records");
  const auto cap = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, max_support)), records.size() - 1);
  const std::size_t k = uniform_index(rng, cap + 1);
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: first k are the support, slot k is the target.
  for (std::size_t i = 0; i <= k; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  Episode ep;
  for (std::size_t i = 0; i < k; ++i) ep.support.push_back(records[idx[i]]);
  ep.target = records[idx[k]];
  return ep;
}

EpisodeScore score_episodes(const ToMState& tom, std::span<const Episode> episodes) {
  std::vector<double> nlls(episodes.size()), hits(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t e) {
    const auto& ep = episodes[e];
    const auto p = predict(tom, ep.support, ep.target.obs, std::span(&ep.target.message, 1))[0];
    nlls[e] = -std::log(std::max(p[static_cast<std::size_t>(ep.target.action)], 1e-12));
    hits[e] = argmax(p) == static_cast<std::size_t>(ep.target.action) ? 1.0 : 0.0;
  });
  EpisodeScore s;
  if (episodes.empty()) return s;
  s.nll = std::accumulate(nlls.begin(), nlls.end(), 0.0) / static_cast<double>(episodes.size());
  s.accuracy = std::accumulate(hits.begin(), hits.end(), 0.0) / static_cast<double>(episodes.size());
  return s;
}

MetaTrainReport meta_train(ToMState& tom, const std::vector<std::vector<Interaction>>& per_listener,
                           const MetaTrainOptions& opt) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < per_listener.size(); ++i) {
    if (per_listener[i].size() >= 2) usable.push_back(i);
  }
  if (usable.size() < 2) throw std::invalid_argument("meta_train: need data from at least two listeners");
  Rng rng = substream(opt.seed, "meta-train");
  MetaTrainReport rep;
  for (int u = 0; u < opt.updates; ++u) {
    std::vector<Episode> batch;
    for (std::size_t b = 0; b < opt.batch; ++b) {
      const auto& records = per_listener[usable[uniform_index(rng, usable.size())]];
      batch.push_back(sample_episode(records, opt.max_support, rng));
    }
    MetaGradient mg = meta_loss(tom, batch, opt.mode);
    if (!std::isfinite(mg.loss)) {
      throw NonFiniteLoss("meta_train: non-finite loss at update " + std::to_string(u) + " (seed " +
                          std::to_string(opt.seed) + ")");
    }
    double scale = 1.0;
    if (opt.clip_norm > 0.0) {
      double sq = 0.0;
      for (double v : mg.grad_theta.flatten()) sq += v * v;
      for (double v : mg.grad_lrs) sq += v * v;
      const double norm = std::sqrt(sq);
      if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
    }
    const std::vector<double> step(tom.theta.num_segments(), opt.eta_outer * scale);
    if (opt.learn_theta) tom.theta = ad::sgd_step(tom.theta, mg.grad_theta, step);
    if (opt.learn_lrs) {
      for (std::size_t s = 0; s < tom.inner_lrs.size(); ++s) {
        tom.inner_lrs[s] = std::clamp(tom.inner_lrs[s] - opt.eta_outer * scale * mg.grad_lrs[s],
                                      opt.lr_min, opt.lr_max);
      }
    }
    rep.batch_loss.push_back(mg.loss);
    rep.mean_loss += mg.loss / static_cast<double>(opt.updates);
  }
  return rep;
}

std::vector<double> pretrain_tom(ToMState& tom, const std::vector<std::vector<Interaction>>& per_listener,
                                 const PretrainOptions& opt) {
  std::vector<const Interaction*> pool;
  for (const auto& recs : per_listener) {
    for (const auto& r : recs) pool.push_back(&r);
  }
  if (pool.empty()) throw std::invalid_argument("pretrain_tom: no interactions");
  Rng rng = substream(opt.seed, "tom-pretrain");
  ad::Momentum optim(opt.lr, opt.momentum);
  std::vector<double> curve;
  for (int e = 0; e < opt.epochs; ++e) {
    shuffle(rng, pool);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t i = 0; i < pool.size(); i += opt.batch) {
      std::vector<Interaction> batch;
      for (std::size_t j = i; j < std::min(pool.size(), i + opt.batch); ++j) batch.push_back(*pool[j]);
      const Batch b = make_batch(tom.cfg, batch);
      auto fr = ad::forward(
          [&](std::span<const Var> p, std::span<const Var>) { return nll(log_probs(tom.cfg, p, b), b).loss; }, {},
          tom.theta);
      const double loss = fr.output.item();
      if (!std::isfinite(loss)) throw NonFiniteLoss("pretrain_tom: non-finite loss");
      optim.step(tom.theta, ad::backward(fr, Tensor::scalar(1.0)));
      total += loss;
      ++steps;
    }
    curve.push_back(total / static_cast<double>(steps));
  }
  return curve;
}

}  // namespace tomcoord::agents

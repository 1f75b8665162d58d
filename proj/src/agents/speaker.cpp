#include "tomcoord/agents/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace tomcoord::agents {

using namespace worlds;

CandidatePool referential_speak(const RefGame& game, const std::vector<Lexicon>& lexicons,
                                int native_language) {
  if (static_cast<int>(lexicons.size()) != kNumLanguages) {
    throw std::invalid_argument("referential_speak: need one lexicon per language");
  }
  CandidatePool pool;
  pool.planned_action = game.target;
  const auto& target = game.candidates[static_cast<std::size_t>(game.target)];
  for (int l = 0; l < kNumLanguages; ++l) {
    const int lang_rank = l == native_language ? 0 : (l < native_language ? l + 1 : l);
    for (int v = 0; v < kNumVariants; ++v) {
      pool.messages.push_back(describe(target, lexicons[static_cast<std::size_t>(l)], v));
      pool.scores.push_back(-static_cast<double>(v * kNumLanguages + lang_rank));
    }
  }
  return pool;
}

CandidatePool nav_speak(const ExpertPlan& plan, std::size_t step) {
  if (step >= plan.trajectory.size()) {
    throw std::out_of_range("nav_speak: step " + std::to_string(step) + " past plan of length " +
                            std::to_string(plan.trajectory.size()));
  }
  CandidatePool pool;
  pool.planned_action = plan.trajectory[step];
  for (const auto& m : plan.levels[step]) pool.messages.push_back(m);
  pool.messages.push_back(Message::empty());
  pool.scores.assign(pool.messages.size(), 0.0);
  return pool;
}

CandidatePool nav_speak(const GridWorld& world) {
  const PlanStep s = plan_next(world);
  CandidatePool pool;
  pool.planned_action = s.action;
  for (const auto& m : instructions_for(world, s)) pool.messages.push_back(m);
  pool.messages.push_back(Message::empty());
  pool.scores.assign(pool.messages.size(), 0.0);
  return pool;
}

namespace {

enum Seg { kEmb, kInitW, kInitB, kWx, kWo, kWh, kRb, kOutW, kOutB };

Tensor normal(Rng& rng, std::size_t r, std::size_t c, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t = Tensor::zeros({r, c});
  for (double& v : t.data()) v = n(rng);
  return t;
}

int marker(int language) { return kRefWords + language; }

// Plain-double forward pieces for generation.
struct Cell {
  const RnnSpeaker& s;
  std::size_t d, h;

  explicit Cell(const RnnSpeaker& sp)
      : s(sp), d(static_cast<std::size_t>(sp.cfg.d)), h(static_cast<std::size_t>(sp.cfg.hidden)) {}

  const Tensor& seg(Seg k) const { return s.params.segment(k).value; }

  std::vector<double> object_drive(const ObjectFeature& o) const {
    const auto x = multi_hot(o);
    std::vector<double> out(h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
      for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * seg(kWo)[i * h + j];
    }
    return out;
  }

  std::vector<double> init(const ObjectFeature& o) const {
    const auto x = multi_hot(o);
    std::vector<double> out(h);
    for (std::size_t j = 0; j < h; ++j) {
      double a = seg(kInitB)[j];
      for (std::size_t i = 0; i < x.size(); ++i) a += x[i] * seg(kInitW)[i * h + j];
      out[j] = std::tanh(a);
    }
    return out;
  }

  std::vector<double> embed_hard(int token) const {
    const auto row = static_cast<std::size_t>(token) * d;
    return {seg(kEmb).data().begin() + static_cast<std::ptrdiff_t>(row),
            seg(kEmb).data().begin() + static_cast<std::ptrdiff_t>(row + d)};
  }

  std::vector<double> embed_soft(const std::vector<double>& y) const {
    std::vector<double> x(d, 0.0);
    for (int t = 0; t < kRefWords; ++t) {
      const double w = y[static_cast<std::size_t>(t)];
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) x[k] += w * seg(kEmb)[static_cast<std::size_t>(t) * d + k];
    }
    return x;
  }

  std::vector<double> step(const std::vector<double>& hp, const std::vector<double>& x,
                           const std::vector<double>& drive) const {
    std::vector<double> out(h);
    for (std::size_t j = 0; j < h; ++j) {
      double a = seg(kRb)[j] + drive[j];
      for (std::size_t i = 0; i < d; ++i) a += x[i] * seg(kWx)[i * h + j];
      for (std::size_t i = 0; i < h; ++i) a += hp[i] * seg(kWh)[i * h + j];
      out[j] = std::tanh(a);
    }
    return out;
  }

  std::vector<double> log_probs(const std::vector<double>& hs) const {
    std::vector<double> z(kSpeakerOut);
    for (std::size_t j = 0; j < z.size(); ++j) {
      double a = seg(kOutB)[j];
      for (std::size_t i = 0; i < h; ++i) a += hs[i] * seg(kOutW)[i * z.size() + j];
      z[j] = a;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (double& v : z) v -= lse;
    return z;
  }
};

// Teacher-forcing loss over same-length pairs.
Var tf_loss(const RnnSpeaker& sp, std::span<const Var> p, std::span<const CaptionPair* const> pairs) {
  const std::size_t B = pairs.size();
  const std::size_t L = pairs[0]->message.tokens.size();
  std::vector<double> obj(B * kNumValues);
  for (std::size_t b = 0; b < B; ++b) {
    const auto x = multi_hot(pairs[b]->object);
    std::copy(x.begin(), x.end(), obj.begin() + static_cast<std::ptrdiff_t>(b * kNumValues));
  }
  const Var objv = Var::constant(Tensor({B, static_cast<std::size_t>(kNumValues)}, obj));
  Var h = tanh(add(matmul(objv, p[kInitW]), p[kInitB]));
  const Var drive = add(matmul(objv, p[kWo]), p[kRb]);
  Var total;
  for (std::size_t t = 0; t <= L; ++t) {
    std::vector<std::size_t> in(B), pick(B);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& toks = pairs[b]->message.tokens;
      in[b] = static_cast<std::size_t>(t == 0 ? marker(pairs[b]->message.tag) : toks[t - 1]);
      const int tgt = t < L ? toks[t] : kSpeakerEos;
      pick[b] = b * kSpeakerOut + static_cast<std::size_t>(tgt);
    }
    const Var x = gather_rows(p[kEmb], in);
    h = tanh(add(add(matmul(x, p[kWx]), matmul(h, p[kWh])), drive));
    const Var lp = log_softmax(add(matmul(h, p[kOutW]), p[kOutB]));
    const Var picked = sum(gather(lp, std::move(pick), {B}));
    total = total.defined() ? add(total, picked) : picked;
  }
  (void)sp;
  return scale(total, -1.0 / static_cast<double>(B * (L + 1)));
}

std::map<std::size_t, std::vector<const CaptionPair*>> by_length(
    const std::vector<CaptionPair>& pairs) {
  std::map<std::size_t, std::vector<const CaptionPair*>> out;
  for (const auto& c : pairs) out[c.message.tokens.size()].push_back(&c);
  return out;
}

}  // namespace

RnnSpeaker init_rnn_speaker(const RnnSpeakerConfig& cfg, Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  RnnSpeaker s{cfg, {}};
  s.params.add("embed", normal(rng, kSpeakerIn, d, 1.0));
  s.params.add("init.w", normal(rng, kNumValues, h, 1.0 / std::sqrt(double(kNumValues))));
  s.params.add("init.b", Tensor::zeros({1, h}));
  s.params.add("rnn.wx", normal(rng, d, h, 1.0 / std::sqrt(double(d))));
  s.params.add("rnn.wo", normal(rng, kNumValues, h, 1.0 / std::sqrt(double(kNumValues))));
  s.params.add("rnn.wh", normal(rng, h, h, 0.5 / std::sqrt(double(h))));
  s.params.add("rnn.b", Tensor::zeros({1, h}));
  s.params.add("out.w", normal(rng, h, kSpeakerOut, 1.0 / std::sqrt(double(h))));
  s.params.add("out.b", Tensor::zeros({1, kSpeakerOut}));
  return s;
}

double speaker_loss(const RnnSpeaker& speaker, const std::vector<CaptionPair>& pairs) {
  if (pairs.empty()) return 0.0;
  const auto p = ad::constants(speaker.params);
  double total = 0.0, count = 0.0;
  for (const auto& [len, group] : by_length(pairs)) {
    const double n = static_cast<double>(group.size() * (len + 1));
    total += tf_loss(speaker, p, group).value().item() * n;
    count += n;
  }
  return total / count;
}

SpeakerFitReport trained_speaker_fit(RnnSpeaker& speaker,
                                     const std::vector<std::vector<CaptionPair>>& corpora,
                                     const SpeakerFitOptions& opt) {
  std::vector<CaptionPair> all;
  for (const auto& c : corpora) all.insert(all.end(), c.begin(), c.end());
  if (all.empty()) throw std::invalid_argument("trained_speaker_fit: empty corpus");
  Rng rng = substream(opt.seed, "speaker-fit");
  ad::Momentum optim(opt.lr, opt.momentum);
  SpeakerFitReport report;
  const auto groups = by_length(all);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<std::vector<const CaptionPair*>> batches;
    for (auto [len, group] : groups) {
      shuffle(rng, group);
      for (std::size_t i = 0; i < group.size(); i += opt.batch) {
        batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(i),
                             group.begin() + static_cast<std::ptrdiff_t>(std::min(group.size(), i + opt.batch)));
      }
    }
    shuffle(rng, batches);
    double total = 0.0;
    const auto diverged = [&] {
      return DivergenceError("speaker training diverged at epoch " + std::to_string(epoch) + " (seed " +
                             std::to_string(opt.seed) + ")");
    };
    for (const auto& batch : batches) {
      try {
        auto fr = ad::forward([&](std::span<const Var> p, std::span<const Var>) { return tf_loss(speaker, p, batch); },
                              {}, speaker.params);
        const double loss = fr.output.item();
        if (!std::isfinite(loss)) throw diverged();
        total += loss;
        optim.step(speaker.params, ad::backward(fr, Tensor::scalar(1.0)));
      } catch (const ad::NonFiniteError&) {
        throw diverged();
      }
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  return report;
}

std::vector<BeamCandidate> beam_search(const RnnSpeaker& speaker, const ObjectFeature& target,
                                       int language, int width, int keep) {
  const Cell cell(speaker);
  struct Beam {
    std::vector<int> tokens;
    std::vector<double> h;
    double score;
  };
  const auto drive = cell.object_drive(target);
  std::vector<Beam> live{{{}, cell.init(target), 0.0}};
  std::vector<BeamCandidate> done;
  for (int t = 0; t < speaker.cfg.max_len && !live.empty(); ++t) {
    std::vector<Beam> next;
    for (const auto& b : live) {
      const int prev = b.tokens.empty() ? marker(language) : b.tokens.back();
      auto h = cell.step(b.h, cell.embed_hard(prev), drive);
      const auto lp = cell.log_probs(h);
      const bool last = t + 1 == speaker.cfg.max_len;
      for (int k = 0; k < kSpeakerOut; ++k) {
        if (last && k != kSpeakerEos) continue;
        Beam nb{b.tokens, h, b.score + lp[static_cast<std::size_t>(k)]};
        if (k != kSpeakerEos) nb.tokens.push_back(k);
        else nb.tokens.push_back(-1);
        next.push_back(std::move(nb));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) { return a.score > b.score; });
    if (next.size() > static_cast<std::size_t>(width)) next.resize(static_cast<std::size_t>(width));
    live.clear();
    for (auto& b : next) {
      if (b.tokens.back() == -1) {
        b.tokens.pop_back();
        done.push_back({Message{b.tokens, language, MessageKind::referential}, b.score});
      } else {
        live.push_back(std::move(b));
      }
    }
  }
  std::stable_sort(done.begin(), done.end(),
                   [](const BeamCandidate& a, const BeamCandidate& b) { return a.log_prob > b.log_prob; });
  if (done.size() > static_cast<std::size_t>(keep)) done.resize(static_cast<std::size_t>(keep));
  return done;
}

CandidatePool trained_speak(const RnnSpeaker& speaker, const RefGame& game) {
  CandidatePool pool;
  pool.planned_action = game.target;
  const auto& target = game.candidates[static_cast<std::size_t>(game.target)];
  for (int l = 0; l < kNumLanguages; ++l) {
    for (auto& c : beam_search(speaker, target, l)) {
      pool.messages.push_back(std::move(c.message));
      pool.scores.push_back(c.log_prob);
    }
  }
  return pool;
}

SoftMessage gumbel_sample(const RnnSpeaker& speaker, const ObjectFeature& target, int language,
                          double tau, Rng& rng) {
  const Cell cell(speaker);
  SoftMessage out{{}, language};
  auto h = cell.init(target);
  const auto drive = cell.object_drive(target);
  std::vector<double> x = cell.embed_hard(marker(language));
  for (int t = 0; t < speaker.cfg.max_len; ++t) {
    h = cell.step(h, x, drive);
    const auto lp = cell.log_probs(h);
    std::vector<double> y(kSpeakerOut);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double u = std::clamp(uniform01(rng), 1e-12, 1.0 - 1e-12);
      y[k] = (lp[k] - std::log(-std::log(u))) / tau;
    }
    const double m = *std::max_element(y.begin(), y.end());
    double s = 0.0;
    for (double& v : y) s += (v = std::exp(v - m));
    for (double& v : y) v /= s;
    if (argmax(y) == static_cast<std::size_t>(kSpeakerEos)) break;
    std::vector<double> pos(kRefVocab, 0.0);
    const double words = 1.0 - y[kSpeakerEos];
    for (int k = 0; k < kRefWords; ++k) pos[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k)] / words;
    out.positions.push_back(std::move(pos));
    x = cell.embed_soft(y);
  }
  return out;
}

}  // namespace tomcoord::agents

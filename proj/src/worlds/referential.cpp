#include "tomcoord/worlds/referential.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tomcoord::worlds {

int ObjectFeature::id() const {
  int id = 0;
  for (int c = 0; c < kNumAttributes; ++c) id = id * kCardinality[c] + attr[c];
  return id;
}

ObjectFeature ObjectFeature::from_id(int id) {
  if (id < 0 || id >= kNumObjects) throw std::out_of_range("object id out of range");
  ObjectFeature o;
  for (int c = kNumAttributes; c-- > 0;) {
    o.attr[c] = id % kCardinality[c];
    id /= kCardinality[c];
  }
  return o;
}

bool ObjectFeature::valid() const {
  for (int c = 0; c < kNumAttributes; ++c) {
    if (attr[c] < 0 || attr[c] >= kCardinality[c]) return false;
  }
  return true;
}

int ObjectFeature::shared_with(const ObjectFeature& other) const {
  int n = 0;
  for (int c = 0; c < kNumAttributes; ++c) n += attr[c] == other.attr[c];
  return n;
}

std::array<double, kNumValues> multi_hot(const ObjectFeature& o) {
  std::array<double, kNumValues> v{};
  for (int c = 0; c < kNumAttributes; ++c) v[o.value_index(c)] = 1.0;
  return v;
}

std::vector<Lexicon> make_lexicons() {
  std::vector<Lexicon> out(kNumLanguages);
  for (int l = 0; l < kNumLanguages; ++l) out[l].language = l;
  return out;
}

double attribute_probability(int category, int value) {
  double z = 0.0;
  for (int j = 0; j < kCardinality[category]; ++j) z += 1.0 / (j + 1);
  return (1.0 / (value + 1)) / z;
}

ObjectFeature sample_corpus_object(Rng& rng) {
  ObjectFeature o;
  for (int c = 0; c < kNumAttributes; ++c) {
    std::vector<double> w(kCardinality[c]);
    for (int j = 0; j < kCardinality[c]; ++j) w[j] = attribute_probability(c, j);
    o.attr[c] = static_cast<int>(sample_discrete(rng, w));
  }
  return o;
}

Message describe(const ObjectFeature& target, const Lexicon& lexicon, int variant) {
  if (variant < 0 || variant >= kNumVariants) {
    throw std::out_of_range("describe: variant must be in 0..4");
  }
  Message m;
  m.kind = MessageKind::referential;
  m.tag = lexicon.language;
  const int dropped = variant == 0 ? -1 : kNumAttributes - variant;
  for (int c = 0; c < kNumAttributes; ++c) {
    if (c != dropped) m.tokens.push_back(lexicon.word_of(c, target.attr[c]));
  }
  return m;
}

std::vector<CaptionPair> gen_caption_corpus(const Lexicon& lexicon, std::size_t n,
                                            std::uint64_t seed) {
  Rng rng = substream(seed, "corpus", static_cast<std::uint64_t>(lexicon.language));
  std::vector<CaptionPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ObjectFeature o = sample_corpus_object(rng);
    const int variant = static_cast<int>(uniform_index(rng, kNumVariants));
    out.push_back({o, describe(o, lexicon, variant)});
  }
  return out;
}

std::vector<int> rank_tokens(const std::vector<CaptionPair>& corpus, int language) {
  std::vector<std::size_t> count(kNumValues, 0);
  for (const auto& p : corpus) {
    for (int t : p.message.tokens) {
      if (token_language(t) == language) ++count[t - language * kNumValues];
    }
  }
  std::vector<int> order(kNumValues);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return count[a] > count[b]; });
  for (int& v : order) v = word_token(language, v);
  return order;
}

RefGame sample_ref_game(Rng& rng, DistractorPolicy policy) {
  const auto target = ObjectFeature::from_id(static_cast<int>(uniform_index(rng, kNumObjects)));
  return sample_ref_game_for(rng, target, policy);
}

RefGame sample_ref_game_for(Rng& rng, const ObjectFeature& target, DistractorPolicy policy) {
  std::vector<int> similar, rest;
  for (int id = 0; id < kNumObjects; ++id) {
    const auto o = ObjectFeature::from_id(id);
    if (o == target) continue;
    if (policy == DistractorPolicy::share2 && o.shared_with(target) >= 2) {
      similar.push_back(id);
    } else {
      rest.push_back(id);
    }
  }
  shuffle(rng, similar);
  shuffle(rng, rest);
  std::vector<int> picked(similar.begin(),
                          similar.begin() + std::min<std::ptrdiff_t>(9, std::ssize(similar)));
  for (std::size_t i = 0; picked.size() < kNumCandidates - 1; ++i) picked.push_back(rest[i]);

  RefGame g;
  g.target = static_cast<int>(uniform_index(rng, kNumCandidates));
  for (int i = 0, d = 0; i < kNumCandidates; ++i) {
    g.candidates[i] = i == g.target ? target : ObjectFeature::from_id(picked[d++]);
  }
  return g;
}

RefGame sample_ref_game(std::uint64_t seed, DistractorPolicy policy) {
  Rng rng(seed);
  return sample_ref_game(rng, policy);
}

}  // namespace tomcoord::worlds

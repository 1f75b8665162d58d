#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tomcoord/util/random.hpp"
#include "tomcoord/worlds/message.hpp"

namespace tomcoord::worlds {

inline constexpr int kNumAttributes = 4;  // color, shape, size, pattern
inline constexpr std::array<int, kNumAttributes> kCardinality{6, 6, 3, 3};
inline constexpr std::array<int, kNumAttributes> kValueOffset{0, 6, 12, 15};
inline constexpr int kNumValues = 18;
inline constexpr int kNumObjects = 6 * 6 * 3 * 3;
inline constexpr int kNumLanguages = 10;
inline constexpr int kRefWords = kNumLanguages * kNumValues;  // 180
inline constexpr int kRefUnk = kRefWords;
inline constexpr int kRefVocab = kRefWords + 1;
inline constexpr int kNumCandidates = 10;
inline constexpr int kNumVariants = 5;

struct ObjectFeature {
  std::array<int, kNumAttributes> attr{};

  int id() const;
  static ObjectFeature from_id(int id);
  int value_index(int category) const { return kValueOffset[category] + attr[category]; }
  bool valid() const;
  int shared_with(const ObjectFeature& other) const;
  friend bool operator==(const ObjectFeature&, const ObjectFeature&) = default;
};

// 18-dim indicator over attribute values.
std::array<double, kNumValues> multi_hot(const ObjectFeature& o);

// Tokens of language l are l*18 + value index, so languages are disjoint.
inline constexpr int word_token(int language, int value_index) {
  return language * kNumValues + value_index;
}
inline constexpr int token_language(int token) {
  return token >= 0 && token < kRefWords ? token / kNumValues : -1;
}

struct Lexicon {
  int language = 0;
  // Tokens of this language, most frequent first; filled from a corpus.
  std::vector<int> ranked_tokens;

  int word_of(int category, int value) const {
    return word_token(language, kValueOffset[category] + value);
  }
};

std::vector<Lexicon> make_lexicons();

// Zipf-like marginal law per attribute, shared by every language's corpus.
double attribute_probability(int category, int value);
ObjectFeature sample_corpus_object(Rng& rng);

// Variant 0 names all four attributes; variant v > 0 drops attribute 4 - v
// (pattern, size, shape, then color).
Message describe(const ObjectFeature& target, const Lexicon& lexicon, int variant);

struct CaptionPair {
  ObjectFeature object;
  Message message;
};

std::vector<CaptionPair> gen_caption_corpus(const Lexicon& lexicon, std::size_t n,
                                            std::uint64_t seed);
// Tokens of one language sorted by corpus count (desc), ties by token id.
std::vector<int> rank_tokens(const std::vector<CaptionPair>& corpus, int language);

enum class DistractorPolicy { share2, uniform };

struct RefGame {
  std::array<ObjectFeature, kNumCandidates> candidates{};
  int target = 0;
};

RefGame sample_ref_game(Rng& rng, DistractorPolicy policy = DistractorPolicy::share2);
RefGame sample_ref_game(std::uint64_t seed, DistractorPolicy policy = DistractorPolicy::share2);
// Distractors and target slot drawn around a given target object.
RefGame sample_ref_game_for(Rng& rng, const ObjectFeature& target,
                            DistractorPolicy policy = DistractorPolicy::share2);

}  // namespace tomcoord::worlds

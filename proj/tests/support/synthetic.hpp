#pragma once

// Seeded toy corpora for the training-level checks.

#include <string>
#include <vector>

#include "logcad/data.hpp"
#include "logcad/random.hpp"

namespace synthetic {

using logcad::Entry;
using logcad::Rng;

inline std::string pseudo_word(Rng& rng, std::size_t len) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  std::string w;
  for (std::size_t i = 0; i < len; ++i)
    w += i % 2 == 0 ? kConsonants[rng.below(sizeof kConsonants - 1)] : kVowels[rng.below(sizeof kVowels - 1)];
  return w;
}

// `count` distinct pseudo-words of 4-6 letters.
inline std::vector<std::string> lexicon(Rng& rng, std::size_t count, const std::string& suffix = "") {
  std::vector<std::string> out;
  while (out.size() < count) {
    auto w = pseudo_word(rng, 4 + rng.below(3)) + suffix;
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  return out;
}

struct CueCorpus {
  std::vector<Entry> train, test;
  logcad::EmbeddingTable table;
};

struct CueOptions {
  std::size_t phrases = 10;
  std::size_t cues = 2;
  std::size_t train_contexts = 12;  // per (phrase, cue)
  std::size_t test_contexts = 4;
  std::size_t fillers = 30;
  std::size_t description_words = 60;
  std::size_t emb_width = 32;
};

// Every phrase has one sense per cue word; the description of an instance is
// fixed by the pair (phrase, cue present in its context). Fillers carry no
// information. Test contexts are fresh draws over the same pairs.
inline CueCorpus cue_corpus(std::uint64_t seed, const CueOptions& o = {}) {
  Rng rng(seed);
  const auto phrases = lexicon(rng, o.phrases);
  const auto cues = lexicon(rng, o.cues, "x");
  const auto fillers = lexicon(rng, o.fillers, "q");
  const auto words = lexicon(rng, o.description_words, "d");
  std::vector<std::vector<std::vector<std::string>>> senses(o.phrases);
  for (auto& per_phrase : senses)
    for (std::size_t k = 0; k < o.cues; ++k) {
      std::vector<std::string> d;
      for (std::size_t i = 0, n = 4 + rng.below(3); i < n; ++i) d.push_back(words[rng.below(words.size())]);
      per_phrase.push_back(d);
    }
  auto instance = [&](std::size_t p, std::size_t k) {
    std::vector<std::string> ctx;
    for (std::size_t i = 0, n = 6 + rng.below(7); i < n; ++i) ctx.push_back(fillers[rng.below(fillers.size())]);
    ctx[rng.below(ctx.size())] = std::string(logcad::kTargetMarker);
    std::size_t cue_at;
    do cue_at = rng.below(ctx.size());
    while (ctx[cue_at] == logcad::kTargetMarker);
    ctx[cue_at] = cues[k];
    return *logcad::make_entry({phrases[p]}, ctx, senses[p][k]);
  };
  CueCorpus c{{}, {}, logcad::EmbeddingTable(o.emb_width, seed + 1)};
  for (std::size_t p = 0; p < o.phrases; ++p)
    for (std::size_t k = 0; k < o.cues; ++k) {
      for (std::size_t i = 0; i < o.train_contexts; ++i) c.train.push_back(instance(p, k));
      for (std::size_t i = 0; i < o.test_contexts; ++i) c.test.push_back(instance(p, k));
    }
  auto vector = [&] {
    std::vector<float> v(o.emb_width);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-0.5, 0.5));
    return v;
  };
  for (const auto* group : {&phrases, &cues, &fillers})
    for (const auto& w : *group) c.table.insert(w, vector());
  return c;
}

// 32 entries: 16 phrases with two senses each, told apart by a cue word.
inline std::vector<Entry> overfit_corpus(std::uint64_t seed) {
  Rng rng(seed);
  const auto phrases = lexicon(rng, 16);
  const auto cues = lexicon(rng, 2, "x");
  const auto fillers = lexicon(rng, 12, "q");
  const auto words = lexicon(rng, 40, "d");
  std::vector<Entry> out;
  for (const auto& phrase : phrases)
    for (const auto& cue : cues) {
      std::vector<std::string> ctx;
      for (std::size_t i = 0, n = 5 + rng.below(6); i < n; ++i) ctx.push_back(fillers[rng.below(fillers.size())]);
      const std::size_t trg = rng.below(ctx.size());
      ctx[trg] = std::string(logcad::kTargetMarker);
      ctx[(trg + 1 + rng.below(ctx.size() - 1)) % ctx.size()] = cue;
      std::vector<std::string> d;
      for (std::size_t i = 0, n = 3 + rng.below(5); i < n; ++i) d.push_back(words[rng.below(words.size())]);
      out.push_back(*logcad::make_entry({phrase}, ctx, d));
    }
  return out;
}

}  // namespace synthetic

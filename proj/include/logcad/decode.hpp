#pragma once

// Greedy and beam-search generation over any step scorer:
//
//   struct Scorer {
//     using State = ...;
//     State start() const;
//     std::pair<std::vector<double>, State> step(const State&, int prev) const;  // log-probs
//     int eos() const;
//   };
//
// `prev` is kStartToken on the first step.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "logcad/model.hpp"

namespace logcad {

template <typename S>
concept StepScorer = requires(const S& s, const typename S::State& state, int prev) {
  { s.start() } -> std::convertible_to<typename S::State>;
  { s.step(state, prev) } -> std::convertible_to<std::pair<std::vector<double>, typename S::State>>;
  { s.eos() } -> std::convertible_to<int>;
};

struct DecodeResult {
  std::vector<int> tokens;  // without <eos>
  double log_prob = 0;      // includes the <eos> step when finished
  bool finished = false;

  // Log-probability divided by the number of scored tokens.
  double normalized() const {
    const auto n = tokens.size() + (finished ? 1 : 0);
    return n == 0 ? 0.0 : log_prob / static_cast<double>(n);
  }
};

template <StepScorer S>
DecodeResult greedy_decode(const S& scorer, std::size_t max_len) {
  DecodeResult out;
  auto state = scorer.start();
  int prev = kStartToken;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto [logp, next] = scorer.step(state, prev);
    const auto best = static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    out.log_prob += logp[static_cast<std::size_t>(best)];
    if (best == scorer.eos()) {
      out.finished = true;
      break;
    }
    out.tokens.push_back(best);
    state = std::move(next);
    prev = best;
  }
  return out;
}

template <typename State>
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0;
  State state;
  bool finished = false;
};

// Keeps the `beam` best expansions by cumulative log-probability at every
// step; expansions ending in <eos> retire into the finished pool. Returns the
// finished hypothesis with the best length-normalised score, or the best
// unfinished one when nothing finished within max_len.
template <StepScorer S>
DecodeResult beam_search(const S& scorer, std::size_t beam, std::size_t max_len) {
  using State = typename S::State;
  beam = std::max<std::size_t>(beam, 1);
  std::vector<Hypothesis<State>> alive;
  alive.push_back({{}, 0.0, scorer.start(), false});
  std::vector<Hypothesis<State>> finished;

  struct Candidate {
    std::size_t parent;
    int token;
    double score;
  };
  for (std::size_t t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<Candidate> candidates;
    std::vector<State> next_states;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const int prev = alive[h].tokens.empty() ? kStartToken : alive[h].tokens.back();
      auto [logp, next] = scorer.step(alive[h].state, prev);
      next_states.push_back(std::move(next));
      for (std::size_t v = 0; v < logp.size(); ++v) {
        if (logp[v] == -std::numeric_limits<double>::infinity()) continue;
        candidates.push_back({h, static_cast<int>(v), alive[h].log_prob + logp[v]});
      }
    }
    const std::size_t keep = std::min(beam, candidates.size());
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hypothesis<State>> survivors;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      Hypothesis<State> h{alive[c.parent].tokens, c.score, next_states[c.parent], false};
      if (c.token == scorer.eos()) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        survivors.push_back(std::move(h));
      }
    }
    alive = std::move(survivors);
  }

  auto pick = [](const std::vector<Hypothesis<State>>& pool) {
    DecodeResult best;
    bool any = false;
    for (const auto& h : pool) {
      DecodeResult r{h.tokens, h.log_prob, h.finished};
      if (!any || r.normalized() > best.normalized()) {
        best = std::move(r);
        any = true;
      }
    }
    return best;
  };
  return finished.empty() ? pick(alive) : pick(finished);
}

// Adapts a trained model and one input to the StepScorer interface.
// [PAD], [TRG] and <bos> can never be emitted.
template <typename T>
class ModelScorer {
 public:
  using State = DecoderState<T>;

  ModelScorer(const Model<T>& model, const ModelInput<T>& input) : model_(model) {
    Graph<T> g(false);
    encoded_ = model_.encode(g, input);
  }

  State start() const { return model_.initial_state(); }
  int eos() const { return Vocab::kEos; }

  std::pair<std::vector<double>, State> step(const State& state, int prev) const {
    Graph<T> g(false);
    auto out = model_.step(g, encoded_, state, prev);
    auto lp = g.log_softmax(out.logits);
    std::vector<double> logp(lp.values().begin(), lp.values().end());
    for (int banned : {Vocab::kPad, Vocab::kTrg, Vocab::kBos})
      logp[static_cast<std::size_t>(banned)] = -std::numeric_limits<double>::infinity();
    return {std::move(logp), std::move(out.state)};
  }

 private:
  const Model<T>& model_;
  Encoded<T> encoded_;
};

// Decodes one input; beam <= 1 selects greedy decoding.
template <typename T>
DecodeResult describe(const Model<T>& model, const ModelInput<T>& input, std::size_t beam, std::size_t max_len) {
  ModelScorer<T> scorer(model, input);
  return beam <= 1 ? greedy_decode(scorer, max_len) : beam_search(scorer, beam, max_len);
}

}  // namespace logcad

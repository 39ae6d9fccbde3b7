#pragma once

#include <algorithm>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "capforge/scorer.hpp"

namespace capforge {

// A partial caption under beam search: its tokens, the predicted
// probability of each token after <startseq>, and the cached quality score.
struct Candidate {
  TokenSequence tokens;
  std::vector<double> omegas;
  bool finished = false;
  double score = 0.0;
};

struct BeamConfig {
  int beta = 3;       // beam width: population cap after truncation
  int kappa = 3;      // neighborhood size: children per unfinished candidate
  double alpha = 0.6; // geometric discount on later tokens
  int max_len = 15;   // appended tokens per caption; <startseq> is free

  void validate() const {
    if (beta < 1) throw std::invalid_argument("BeamConfig: beta must be >= 1");
    if (kappa < 1) throw std::invalid_argument("BeamConfig: kappa must be >= 1");
    if (!(alpha > 0.0) || alpha > 1.0) {
      throw std::invalid_argument("BeamConfig: alpha must be in (0, 1]");
    }
    if (max_len < 1) {
      throw std::invalid_argument("BeamConfig: max_len must be >= 1");
    }
  }
};

// Quality of a candidate: sum over t of omega_t * alpha^t, t starting at 1
// for the first token after <startseq>. Later tokens are geometrically
// discounted, so small alpha favors terse captions.
inline double score_candidate(const std::vector<double>& omegas,
                              double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::invalid_argument("score_candidate: alpha must be in (0, 1]");
  }
  double score = 0.0;
  double weight = 1.0;
  for (double omega : omegas) {
    if (!(omega > 0.0) || omega > 1.0) {
      throw std::invalid_argument(
          "score_candidate: omegas must be in (0, 1]");
    }
    weight *= alpha;
    score += omega * weight;
  }
  return score;
}

namespace detail {

// (probability, index) pairs sorted by probability descending, index
// ascending; zero-probability tokens are never selectable.
inline std::vector<std::pair<double, int>> top_tokens(
    const NextTokenDistribution& dist, int k) {
  std::vector<std::pair<double, int>> order;
  order.reserve(static_cast<std::size_t>(dist.size()));
  for (int i = 0; i < dist.size(); ++i) {
    if (dist.at(i) > 0.0) order.emplace_back(dist.at(i), i);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(order.size()) > k) {
    order.resize(static_cast<std::size_t>(k));
  }
  return order;
}

inline void sort_population(std::vector<Candidate>& population) {
  std::sort(population.begin(), population.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.finished != b.finished) return a.finished;
              return a.tokens < b.tokens;
            });
}

}  // namespace detail

// Repeatedly appends the highest-probability token (ties broken by lowest
// vocabulary index) until <endseq> is appended or max_len tokens have been
// added after <startseq>.
inline TokenSequence greedy_select(const Scorer& scorer,
                                   const ImageEmbedding& embedding,
                                   int max_len = 15) {
  if (max_len < 1) {
    throw std::invalid_argument("greedy_select: max_len must be >= 1");
  }
  const Vocabulary& vocab = scorer.vocabulary();
  TokenSequence tokens{kStartToken};
  for (int appended = 0; appended < max_len; ++appended) {
    const EncodedCaption prefix =
        encode(tokens, vocab, scorer.max_prefix_len());
    const NextTokenDistribution dist = scorer.predict_next(embedding, prefix);
    int best = 0;
    double best_p = -1.0;
    for (int i = 0; i < dist.size(); ++i) {
      if (dist.at(i) > best_p) {
        best_p = dist.at(i);
        best = i;
      }
    }
    tokens.push_back(vocab.token_at(best));
    if (best == kEndIndex) break;
  }
  return tokens;
}

// Beam search over any scorer. Every unfinished candidate is expanded into
// kappa children by appending its kappa most probable continuations
// (recording each predicted probability); finished candidates pass through
// and keep competing at truncation. Returns the final population, at most
// beta candidates, sorted by score descending with (finished, lexicographic)
// tie-breaks. If `trace` is given, it receives the population after the
// initial step and after every truncation.
inline std::vector<Candidate> beam_search(
    const Scorer& scorer, const ImageEmbedding& embedding,
    const BeamConfig& config,
    std::vector<std::vector<Candidate>>* trace = nullptr) {
  config.validate();
  const Vocabulary& vocab = scorer.vocabulary();

  int kappa = config.kappa;
  const int emittable = vocab.size() - 2;  // <null> and <startseq> masked
  if (kappa > emittable) {
    std::cerr << "beam_search: kappa " << kappa << " exceeds the " << emittable
              << " emittable tokens; clamping\n";
    kappa = emittable;
  }

  std::vector<Candidate> population;
  population.push_back(Candidate{{kStartToken}, {}, false, 0.0});
  if (trace) {
    trace->clear();
    trace->push_back(population);
  }

  for (int iter = 0; iter < config.max_len; ++iter) {
    const bool all_finished =
        std::all_of(population.begin(), population.end(),
                    [](const Candidate& c) { return c.finished; });
    if (all_finished) break;

    std::vector<Candidate> next;
    for (const Candidate& candidate : population) {
      if (candidate.finished) {
        next.push_back(candidate);
        continue;
      }
      const EncodedCaption prefix =
          encode(candidate.tokens, vocab, scorer.max_prefix_len());
      const NextTokenDistribution dist =
          scorer.predict_next(embedding, prefix);
      for (const auto& [probability, index] : detail::top_tokens(dist, kappa)) {
        Candidate child = candidate;
        child.tokens.push_back(vocab.token_at(index));
        child.omegas.push_back(probability);
        child.finished = (index == kEndIndex);
        child.score = score_candidate(child.omegas, config.alpha);
        next.push_back(std::move(child));
      }
    }
    detail::sort_population(next);
    if (static_cast<int>(next.size()) > config.beta) {
      next.resize(static_cast<std::size_t>(config.beta));
    }
    population = std::move(next);
    if (trace) trace->push_back(population);
  }
  return population;
}

// Top beam candidate with the markers stripped for display.
struct CaptionResult {
  std::vector<std::string> tokens;
  double score = 0.0;
  std::vector<double> omegas;
};

inline CaptionResult caption_image(const Scorer& scorer,
                                   const ImageEmbedding& embedding,
                                   const BeamConfig& config) {
  const std::vector<Candidate> population =
      beam_search(scorer, embedding, config);
  const Candidate& top = population.front();
  CaptionResult result;
  result.score = top.score;
  result.omegas = top.omegas;
  for (const auto& token : top.tokens) {
    if (token != kStartToken && token != kEndToken) {
      result.tokens.push_back(token);
    }
  }
  return result;
}

}  // namespace capforge

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "capforge/text_pipeline.hpp"

namespace capforge {

using TokenList = std::vector<std::string>;

enum class RougeMode { Recall, F1 };

namespace detail {

inline std::unordered_map<std::string, int> ngram_counts(const TokenList& tokens,
                                                         int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size();
       ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += tokens[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

inline std::size_t lcs_length(const TokenList& a, const TokenList& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n == 0 || m == 0) return 0;
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace detail

// Corpus-level BLEU-N: clipped n-gram counts pooled over all pairs
// (micro-averaged precisions p_1..p_n), geometric mean, multiplied by the
// brevity penalty min(1, exp(1 - r/c)). No smoothing: a zero pooled
// precision at any order gives score 0. Supports one or more references per
// candidate; counts clip against the per-reference maximum and r accumulates
// the reference length closest to each candidate.
inline double bleu_n(const std::vector<TokenList>& candidates,
                     const std::vector<std::vector<TokenList>>& reference_sets,
                     int n) {
  if (n < 1) throw std::invalid_argument("bleu_n: n must be >= 1");
  if (candidates.empty()) throw std::invalid_argument("bleu_n: empty corpus");
  if (candidates.size() != reference_sets.size()) {
    throw std::invalid_argument(
        "bleu_n: candidates and references differ in length");
  }

  std::vector<std::int64_t> matched(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> total(static_cast<std::size_t>(n), 0);
  std::int64_t candidate_len = 0;
  std::int64_t reference_len = 0;

  for (std::size_t p = 0; p < candidates.size(); ++p) {
    const TokenList& candidate = candidates[p];
    const auto& references = reference_sets[p];
    if (references.empty()) {
      throw std::invalid_argument("bleu_n: candidate without references");
    }
    candidate_len += static_cast<std::int64_t>(candidate.size());

    // Closest reference length; ties go to the shorter reference.
    std::size_t best_ref_len = references.front().size();
    for (const auto& ref : references) {
      const auto diff = [&](std::size_t len) {
        return len > candidate.size() ? len - candidate.size()
                                      : candidate.size() - len;
      };
      if (diff(ref.size()) < diff(best_ref_len) ||
          (diff(ref.size()) == diff(best_ref_len) &&
           ref.size() < best_ref_len)) {
        best_ref_len = ref.size();
      }
    }
    reference_len += static_cast<std::int64_t>(best_ref_len);

    for (int order = 1; order <= n; ++order) {
      const auto cand_counts = detail::ngram_counts(candidate, order);
      std::unordered_map<std::string, int> max_ref_counts;
      for (const auto& ref : references) {
        for (const auto& [gram, count] : detail::ngram_counts(ref, order)) {
          auto& best = max_ref_counts[gram];
          best = std::max(best, count);
        }
      }
      for (const auto& [gram, count] : cand_counts) {
        total[static_cast<std::size_t>(order - 1)] += count;
        auto it = max_ref_counts.find(gram);
        if (it != max_ref_counts.end()) {
          matched[static_cast<std::size_t>(order - 1)] +=
              std::min(count, it->second);
        }
      }
    }
  }

  double log_precision_sum = 0.0;
  for (int order = 0; order < n; ++order) {
    const auto idx = static_cast<std::size_t>(order);
    if (total[idx] == 0 || matched[idx] == 0) return 0.0;
    log_precision_sum += std::log(static_cast<double>(matched[idx]) /
                                  static_cast<double>(total[idx]));
  }
  const double geo_mean = std::exp(log_precision_sum / n);

  if (candidate_len == 0) return 0.0;
  const double bp = std::min(
      1.0, std::exp(1.0 - static_cast<double>(reference_len) /
                              static_cast<double>(candidate_len)));
  return bp * geo_mean;
}

// Single-reference convenience overload.
inline double bleu_n(const std::vector<TokenList>& candidates,
                     const std::vector<TokenList>& references, int n) {
  std::vector<std::vector<TokenList>> sets;
  sets.reserve(references.size());
  for (const auto& ref : references) sets.push_back({ref});
  return bleu_n(candidates, sets, n);
}

// ROUGE-L: per pair, longest common subsequence length L gives recall
// R = L / len(reference) and precision P = L / len(candidate); the pair
// scores R (recall mode) or 2PR / (P + R) (f1 mode, 0 when P + R = 0).
// Corpus score is the mean over pairs.
inline double rouge_l(const std::vector<TokenList>& candidates,
                      const std::vector<TokenList>& references,
                      RougeMode mode = RougeMode::F1) {
  if (candidates.empty()) throw std::invalid_argument("rouge_l: empty corpus");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument(
        "rouge_l: candidates and references differ in length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenList& candidate = candidates[i];
    const TokenList& reference = references[i];
    if (candidate.empty() || reference.empty()) continue;  // pair scores 0
    const auto lcs = static_cast<double>(detail::lcs_length(candidate, reference));
    const double recall = lcs / static_cast<double>(reference.size());
    if (mode == RougeMode::Recall) {
      sum += recall;
      continue;
    }
    const double precision = lcs / static_cast<double>(candidate.size());
    if (precision + recall > 0.0) {
      sum += 2.0 * precision * recall / (precision + recall);
    }
  }
  return sum / static_cast<double>(candidates.size());
}

// Unique-token count across all predictions, and mean prediction length.
inline std::pair<std::int64_t, double> diversity_stats(
    const std::vector<TokenList>& candidates) {
  std::unordered_map<std::string, bool> seen;
  std::size_t total_len = 0;
  for (const auto& candidate : candidates) {
    total_len += candidate.size();
    for (const auto& token : candidate) seen[token] = true;
  }
  const double avg_len =
      candidates.empty()
          ? 0.0
          : static_cast<double>(total_len) / static_cast<double>(candidates.size());
  return {static_cast<std::int64_t>(seen.size()), avg_len};
}

struct MetricScores {
  std::map<int, double> bleu;  // n in {1, 2, 3, 4}
  double rouge_l = 0.0;
  std::int64_t terms_generated = 0;
  double avg_caption_len = 0.0;
  std::size_t pair_count = 0;
};

struct EvaluationReport {
  MetricScores overall;
  std::map<std::string, MetricScores> per_label;
  RougeMode rouge_mode = RougeMode::F1;
};

inline MetricScores score_pairs(const std::vector<TokenList>& candidates,
                                const std::vector<TokenList>& references,
                                RougeMode mode) {
  MetricScores scores;
  scores.pair_count = candidates.size();
  for (int n = 1; n <= 4; ++n) {
    scores.bleu[n] = bleu_n(candidates, references, n);
  }
  scores.rouge_l = rouge_l(candidates, references, mode);
  const auto [terms, avg_len] = diversity_stats(candidates);
  scores.terms_generated = terms;
  scores.avg_caption_len = avg_len;
  return scores;
}

}  // namespace capforge

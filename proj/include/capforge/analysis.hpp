#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "capforge/text_pipeline.hpp"

namespace capforge {

namespace detail {

inline bool is_reserved_token(const std::string& token) {
  return token == kNullToken || token == kStartToken || token == kEndToken ||
         token == kUnkToken;
}

}  // namespace detail

// Corpus term counts, descending with lexicographic tie-break; the reserved
// marker tokens are excluded.
inline std::vector<std::pair<std::string, std::int64_t>> term_frequency(
    const std::vector<TokenSequence>& corpus) {
  if (corpus.empty()) {
    throw std::invalid_argument("term_frequency: empty corpus");
  }
  std::map<std::string, std::int64_t> counts;
  for (const auto& caption : corpus) {
    for (const auto& token : caption) {
      if (!detail::is_reserved_token(token)) ++counts[token];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(),
                                                           counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

struct ZipfFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares over (log rank, log count). A Zipfian corpus lands
// near slope -1.
inline ZipfFit zipf_fit(const std::vector<std::int64_t>& ranked_counts) {
  if (ranked_counts.size() < 3) {
    throw std::invalid_argument("zipf_fit: need at least 3 ranks");
  }
  const auto n = static_cast<double>(ranked_counts.size());
  double sx = 0.0, sy = 0.0;
  std::vector<double> xs, ys;
  xs.reserve(ranked_counts.size());
  ys.reserve(ranked_counts.size());
  for (std::size_t i = 0; i < ranked_counts.size(); ++i) {
    if (ranked_counts[i] <= 0) {
      throw std::invalid_argument("zipf_fit: counts must be positive");
    }
    xs.push_back(std::log(static_cast<double>(i + 1)));
    ys.push_back(std::log(static_cast<double>(ranked_counts[i])));
    sx += xs.back();
    sy += ys.back();
  }
  const double mean_x = sx / n;
  const double mean_y = sy / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  ZipfFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = mean_y - fit.slope * mean_x;
  fit.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

inline ZipfFit zipf_fit(
    const std::vector<std::pair<std::string, std::int64_t>>& ranked) {
  std::vector<std::int64_t> counts;
  counts.reserve(ranked.size());
  for (const auto& [token, count] : ranked) counts.push_back(count);
  return zipf_fit(counts);
}

namespace detail {

inline bool contains_subsequence(const std::vector<std::string>& haystack,
                                 const std::vector<std::string>& needle) {
  if (needle.empty()) return true;
  if (needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size(); ++k) {
      if (haystack[i + k] != needle[k]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace detail

// How many predictions contain the phrase as a contiguous subsequence, and
// the fraction of the prediction set that is. The audit behind catching a
// decoder that keeps emitting one high-frequency phrase.
inline std::pair<std::int64_t, double> phrase_frequency_report(
    const std::vector<std::vector<std::string>>& predictions,
    const std::vector<std::string>& phrase) {
  std::int64_t count = 0;
  for (const auto& prediction : predictions) {
    if (detail::contains_subsequence(prediction, phrase)) ++count;
  }
  const double fraction =
      predictions.empty()
          ? 0.0
          : static_cast<double>(count) / static_cast<double>(predictions.size());
  return {count, fraction};
}

}  // namespace capforge

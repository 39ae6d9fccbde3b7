#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "capforge/scorer.hpp"

namespace capforge {

// Maximum-likelihood n-gram model over training captions: raw count ratios,
// no discounting, with stupid backoff to shorter contexts. This is the
// "naive agent" baseline that conditions on previous tokens only and
// ignores the image entirely.
class NgramModel : public Scorer {
 public:
  struct ContextCounts {
    std::int64_t total = 0;
    std::map<int, std::int64_t> next;  // token index -> count
  };

  NgramModel() = default;
  NgramModel(int n, Vocabulary vocab) : n_(n), vocab_(std::move(vocab)) {
    if (n < 1) throw std::invalid_argument("NgramModel: n must be >= 1");
  }

  int order() const { return n_; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  int max_prefix_len() const override { return 256; }

  void observe(const std::vector<int>& context, int token) {
    add_count(context, token, 1);
  }

  void add_count(const std::vector<int>& context, int token,
                 std::int64_t count) {
    auto& bucket = counts_[context];
    bucket.total += count;
    bucket.next[token] += count;
  }

  std::int64_t context_total(const std::vector<int>& context) const {
    auto it = counts_.find(context);
    return it == counts_.end() ? 0 : it->second.total;
  }

  std::int64_t count(const std::vector<int>& context, int token) const {
    auto it = counts_.find(context);
    if (it == counts_.end()) return 0;
    auto jt = it->second.next.find(token);
    return jt == it->second.next.end() ? 0 : jt->second;
  }

  const std::map<std::vector<int>, ContextCounts>& counts() const {
    return counts_;
  }

  // Longest stored context that suffixes the prefix, backing off to shorter
  // contexts (weight 1) when unseen. The embedding argument of the scorer
  // contract is ignored.
  NextTokenDistribution predict_next(
      const ImageEmbedding& /*embedding*/,
      const EncodedCaption& prefix) const override {
    NextTokenDistribution dist;
    dist.probabilities.assign(static_cast<std::size_t>(vocab_.size()), 0.0);
    const int len = prefix.true_length;
    const int max_context = std::min(n_ - 1, len);
    for (int c = max_context; c >= 0; --c) {
      std::vector<int> context(
          prefix.indices.begin() + (len - c),
          prefix.indices.begin() + len);
      auto it = counts_.find(context);
      if (it == counts_.end() || it->second.total == 0) continue;
      for (const auto& [token, count] : it->second.next) {
        dist.probabilities[static_cast<std::size_t>(token)] =
            static_cast<double>(count) /
            static_cast<double>(it->second.total);
      }
      return dist;
    }
    // Unreachable after training on a non-empty corpus: fall back to a
    // uniform distribution over emittable tokens.
    const int emittable = vocab_.size() - 2;
    for (int i = 0; i < vocab_.size(); ++i) {
      if (i == kNullIndex || i == kStartIndex) continue;
      dist.probabilities[static_cast<std::size_t>(i)] = 1.0 / emittable;
    }
    return dist;
  }

  // Top-k continuations of a token-string context by raw count, descending,
  // ties broken lexicographically. Unknown contexts yield an empty table.
  std::vector<std::pair<std::string, std::int64_t>> leading_ngram_table(
      const std::vector<std::string>& context, std::size_t k) const {
    if (static_cast<int>(context.size()) >= n_) {
      throw std::invalid_argument(
          "leading_ngram_table: context length must be < n");
    }
    std::vector<int> indices;
    indices.reserve(context.size());
    for (const auto& token : context) indices.push_back(vocab_.index_of(token));
    auto it = counts_.find(indices);
    if (it == counts_.end()) return {};
    std::vector<std::pair<std::string, std::int64_t>> table;
    table.reserve(it->second.next.size());
    for (const auto& [token, count] : it->second.next) {
      table.emplace_back(vocab_.token_at(token), count);
    }
    std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (table.size() > k) table.resize(k);
    return table;
  }

 private:
  int n_ = 3;
  Vocabulary vocab_;
  std::map<std::vector<int>, ContextCounts> counts_;
};

// Counts every (context, next-token) pair across the corpus for contexts of
// all lengths 0..n-1. <startseq> anchors contexts and is never a predicted
// token.
inline NgramModel train_ngram(const std::vector<TokenSequence>& captions,
                              int n, const Vocabulary& vocab) {
  if (n < 1) throw std::invalid_argument("train_ngram: n must be >= 1");
  if (captions.empty()) {
    throw std::invalid_argument("train_ngram: empty corpus");
  }
  NgramModel model(n, vocab);
  std::vector<int> indices;
  for (const auto& caption : captions) {
    indices.clear();
    indices.reserve(caption.size());
    for (const auto& token : caption) indices.push_back(vocab.index_of(token));
    const int len = static_cast<int>(indices.size());
    for (int pos = 1; pos < len; ++pos) {
      const int longest = std::min(n - 1, pos);
      for (int c = 0; c <= longest; ++c) {
        std::vector<int> context(indices.begin() + (pos - c),
                                 indices.begin() + pos);
        model.observe(context, indices[static_cast<std::size_t>(pos)]);
      }
    }
  }
  return model;
}

// --- n-gram model text format ---
// Header "NGRAM v1 <n>", then one line per (context, token) pair:
// space-joined-context-tokens<TAB>token<TAB>count. The context field is
// empty for the unigram context.

inline void save_ngram(const NgramModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_ngram: cannot open " + path);
  out << "NGRAM v1 " << model.order() << '\n';
  const Vocabulary& vocab = model.vocabulary();
  for (const auto& [context, bucket] : model.counts()) {
    std::string context_text;
    for (std::size_t i = 0; i < context.size(); ++i) {
      if (i) context_text.push_back(' ');
      context_text += vocab.token_at(context[i]);
    }
    for (const auto& [token, count] : bucket.next) {
      out << context_text << '\t' << vocab.token_at(token) << '\t' << count
          << '\n';
    }
  }
  if (!out) throw std::runtime_error("save_ngram: write failed: " + path);
}

inline NgramModel load_ngram(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_ngram: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  int n = 0;
  hs >> magic >> version >> n;
  if (magic != "NGRAM" || version != "v1" || n < 1) {
    throw std::runtime_error("load_ngram: bad header in " + path);
  }
  NgramModel model(n, vocab);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw std::runtime_error("load_ngram: malformed line: " + line);
    }
    const std::string context_text = line.substr(0, t1);
    const std::string token = line.substr(t1 + 1, t2 - t1 - 1);
    const std::int64_t count = std::stoll(line.substr(t2 + 1));
    std::vector<int> context;
    for (const auto& ctx_token : detail::split_whitespace(context_text)) {
      if (!vocab.contains(ctx_token)) {
        throw std::runtime_error("load_ngram: token '" + ctx_token +
                                 "' not in vocabulary");
      }
      context.push_back(vocab.index_of(ctx_token));
    }
    if (!vocab.contains(token)) {
      throw std::runtime_error("load_ngram: token '" + token +
                               "' not in vocabulary");
    }
    model.add_count(context, vocab.index_of(token), count);
  }
  return model;
}

}  // namespace capforge

#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "capforge/embedding_store.hpp"
#include "capforge/text_pipeline.hpp"

namespace capforge {

// Probability of each vocabulary index appearing next, conditioned on an
// image and a caption prefix. Entries sum to 1; the <null> and <startseq>
// indices are structurally impossible continuations and are masked to
// exactly 0.
struct NextTokenDistribution {
  std::vector<double> probabilities;

  int size() const { return static_cast<int>(probabilities.size()); }

  double at(int index) const {
    return probabilities[static_cast<std::size_t>(index)];
  }

  bool is_valid() const {
    double sum = 0.0;
    for (double p : probabilities) {
      if (!(p >= 0.0) || !std::isfinite(p)) return false;
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) return false;
    if (size() > kStartIndex &&
        (probabilities[kNullIndex] != 0.0 || probabilities[kStartIndex] != 0.0)) {
      return false;
    }
    return true;
  }
};

// The conditional next-token prediction contract shared by the n-gram and
// neural models. Implementations are immutable after training; predict_next
// is read-only and callable concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual NextTokenDistribution predict_next(
      const ImageEmbedding& embedding, const EncodedCaption& prefix) const = 0;

  virtual const Vocabulary& vocabulary() const = 0;

  // Longest prefix (in tokens, including <startseq>) the scorer accepts;
  // the decoder truncates older context beyond this.
  virtual int max_prefix_len() const { return 64; }
};

}  // namespace capforge

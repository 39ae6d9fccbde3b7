#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "capforge/embedding_store.hpp"
#include "capforge/rng.hpp"
#include "capforge/text_pipeline.hpp"

namespace capforge {

// One captioned image: the normalized tokens plus the embedding key and an
// optional category label.
struct CaptionRecord {
  std::string photo_id;
  TokenSequence tokens;
  std::string label;  // empty when unlabeled
};

// One supervised example: the encoded caption prefix (covariates) and the
// index of the token that follows it (response).
struct TrainingExample {
  std::string photo_id;
  EncodedCaption prefix;
  int target = 0;
};

struct SplitResult {
  std::vector<CaptionRecord> train;
  std::vector<CaptionRecord> validation;
};

// Partitions caption records before any expansion, so whole captions never
// straddle the split. Deterministic given the seed. The validation side
// receives every fractional record: 100,807 records at fraction 0.2 give
// 20,162 validation captions.
inline SplitResult split(const std::vector<CaptionRecord>& records,
                         double validation_fraction, std::uint64_t seed) {
  if (records.empty()) {
    throw std::invalid_argument("split: empty record collection");
  }
  if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0)) {
    throw std::invalid_argument("split: validation_fraction must be in (0, 1)");
  }
  const auto n = records.size();
  auto validation_count = static_cast<std::size_t>(
      std::ceil(validation_fraction * static_cast<double>(n) - 1e-9));
  if (validation_count == 0) validation_count = 1;
  if (validation_count >= n) validation_count = n - 1;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  SplitResult result;
  result.validation.reserve(validation_count);
  result.train.reserve(n - validation_count);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < validation_count) {
      result.validation.push_back(records[order[i]]);
    } else {
      result.train.push_back(records[order[i]]);
    }
  }
  return result;
}

// Expands one caption into per-token language-modeling examples: a caption
// whose encoded true length is L yields L-1 examples, the t-th pairing the
// first t tokens (padded) with token t+1. <startseq> is never a target.
// Captions with true length < 2 yield nothing.
inline std::vector<TrainingExample> expand(const CaptionRecord& record,
                                           const Vocabulary& vocab,
                                           int max_len) {
  const EncodedCaption encoded = encode(record.tokens, vocab, max_len);
  std::vector<TrainingExample> examples;
  if (encoded.true_length < 2) return examples;
  examples.reserve(static_cast<std::size_t>(encoded.true_length - 1));
  for (int t = 1; t < encoded.true_length; ++t) {
    TrainingExample ex;
    ex.photo_id = record.photo_id;
    ex.prefix.indices.assign(static_cast<std::size_t>(max_len), kNullIndex);
    for (int i = 0; i < t; ++i) {
      ex.prefix.indices[static_cast<std::size_t>(i)] =
          encoded.indices[static_cast<std::size_t>(i)];
    }
    ex.prefix.true_length = t;
    ex.target = encoded.indices[static_cast<std::size_t>(t)];
    examples.push_back(std::move(ex));
  }
  return examples;
}

struct ExpandedDataset {
  std::vector<TrainingExample> examples;
  std::size_t caption_count = 0;

  double examples_per_caption() const {
    return caption_count == 0
               ? 0.0
               : static_cast<double>(examples.size()) /
                     static_cast<double>(caption_count);
  }
};

// Concatenation of expand() over records in stable record order.
inline ExpandedDataset expand_all(const std::vector<CaptionRecord>& records,
                                  const Vocabulary& vocab, int max_len) {
  ExpandedDataset dataset;
  dataset.caption_count = records.size();
  for (const auto& record : records) {
    auto examples = expand(record, vocab, max_len);
    dataset.examples.insert(dataset.examples.end(),
                            std::make_move_iterator(examples.begin()),
                            std::make_move_iterator(examples.end()));
  }
  return dataset;
}

// --- expanded-dataset cache format ---
// Magic "NICD", version u8 = 1, max_len u32 LE, example count u64 LE,
// caption count u64 LE; then per example: photo_id length u16 LE, photo_id
// bytes, max_len u32 LE prefix indices, prefix true_length u32 LE,
// target u32 LE.

inline constexpr char kDatasetMagic[4] = {'N', 'I', 'C', 'D'};
inline constexpr std::uint8_t kDatasetVersion = 1;

inline void save_dataset(const ExpandedDataset& dataset, int max_len,
                         const std::string& path) {
  std::string buf;
  buf.append(kDatasetMagic, 4);
  buf.push_back(static_cast<char>(kDatasetVersion));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(max_len));
  detail::put_u64_le(buf, static_cast<std::uint64_t>(dataset.examples.size()));
  detail::put_u64_le(buf, static_cast<std::uint64_t>(dataset.caption_count));
  for (const auto& ex : dataset.examples) {
    if (ex.prefix.max_len() != max_len) {
      throw std::invalid_argument("save_dataset: prefix length mismatch");
    }
    detail::put_u16_le(buf, static_cast<std::uint16_t>(ex.photo_id.size()));
    buf += ex.photo_id;
    for (int idx : ex.prefix.indices) {
      detail::put_u32_le(buf, static_cast<std::uint32_t>(idx));
    }
    detail::put_u32_le(buf, static_cast<std::uint32_t>(ex.prefix.true_length));
    detail::put_u32_le(buf, static_cast<std::uint32_t>(ex.target));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("save_dataset: write failed: " + path);
  }
}

inline ExpandedDataset load_dataset(const std::string& path, int* max_len_out) {
  detail::ByteReader reader(detail::slurp_file(path), path);
  char magic[4];
  reader.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a dataset cache (bad magic)");
  }
  const std::uint8_t version = reader.read_u8("version");
  if (version != kDatasetVersion) {
    throw std::runtime_error(path + ": unsupported dataset version " +
                             std::to_string(version));
  }
  const int max_len = static_cast<int>(reader.read_u32_le("max_len"));
  const std::uint64_t count = reader.read_u64_le("record count");
  ExpandedDataset dataset;
  dataset.caption_count =
      static_cast<std::size_t>(reader.read_u64_le("caption count"));
  dataset.examples.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    TrainingExample ex;
    const std::uint16_t id_len = reader.read_u16_le("photo_id length");
    ex.photo_id = reader.read_string(id_len, "photo_id");
    ex.prefix.indices.resize(static_cast<std::size_t>(max_len));
    for (int i = 0; i < max_len; ++i) {
      ex.prefix.indices[static_cast<std::size_t>(i)] =
          static_cast<int>(reader.read_u32_le("prefix index"));
    }
    ex.prefix.true_length = static_cast<int>(reader.read_u32_le("true_length"));
    ex.target = static_cast<int>(reader.read_u32_le("target"));
    dataset.examples.push_back(std::move(ex));
  }
  if (max_len_out) *max_len_out = max_len;
  return dataset;
}

}  // namespace capforge

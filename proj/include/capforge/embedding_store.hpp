#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capforge/rng.hpp"

namespace capforge {

// Fixed-length vector of CNN activations (or a mock stand-in) for one image.
// Values are held as 32-bit floats, matching the on-disk format.
struct ImageEmbedding {
  std::vector<float> values;

  int dim() const { return static_cast<int>(values.size()); }
};

enum class StoreError { BadMagic, BadVersion, Truncated, DimMismatch, Io };

class StoreFormatError : public std::runtime_error {
 public:
  StoreFormatError(StoreError kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  StoreError kind() const { return kind_; }

 private:
  StoreError kind_;
};

// Ordered photo_id -> embedding map; all embeddings share one dimension.
// Immutable once loaded, so concurrent lookups are safe.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(int dim) : dim_(dim) {
    if (dim < 1) {
      throw std::invalid_argument("EmbeddingStore: dim must be >= 1");
    }
  }

  int dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void add(std::string photo_id, ImageEmbedding embedding) {
    if (embedding.dim() != dim_) {
      throw StoreFormatError(
          StoreError::DimMismatch,
          "EmbeddingStore::add: embedding for '" + photo_id + "' has dim " +
              std::to_string(embedding.dim()) + ", store dim is " +
              std::to_string(dim_));
    }
    if (index_.count(photo_id)) {
      throw std::invalid_argument("EmbeddingStore::add: duplicate photo_id '" +
                                  photo_id + "'");
    }
    index_.emplace(photo_id, entries_.size());
    entries_.emplace_back(std::move(photo_id), std::move(embedding));
  }

  bool contains(std::string_view photo_id) const {
    return index_.find(std::string(photo_id)) != index_.end();
  }

  const ImageEmbedding& at(std::string_view photo_id) const {
    auto it = index_.find(std::string(photo_id));
    if (it == index_.end()) {
      throw std::out_of_range("EmbeddingStore: no embedding for photo_id '" +
                              std::string(photo_id) + "'");
    }
    return entries_[it->second].second;
  }

  // Insertion-ordered view, matching on-disk record order.
  const std::vector<std::pair<std::string, ImageEmbedding>>& entries() const {
    return entries_;
  }

 private:
  int dim_;
  std::vector<std::pair<std::string, ImageEmbedding>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void put_u16_le(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32_le(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64_le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32_le(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32_le(buf, bits);
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint64_t remaining() const { return data_.size() - pos_; }

  void read_bytes(void* out, std::size_t n, const char* what) {
    if (remaining() < n) {
      throw StoreFormatError(StoreError::Truncated,
                             path_ + ": truncated while reading " +
                                 std::string(what));
    }
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }

  std::uint8_t read_u8(const char* what) {
    std::uint8_t v;
    read_bytes(&v, 1, what);
    return v;
  }

  std::uint16_t read_u16_le(const char* what) {
    std::uint8_t b[2];
    read_bytes(b, 2, what);
    return static_cast<std::uint16_t>(b[0]) |
           static_cast<std::uint16_t>(b[1]) << 8;
  }

  std::uint32_t read_u32_le(const char* what) {
    std::uint8_t b[4];
    read_bytes(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t read_u64_le(const char* what) {
    std::uint8_t b[8];
    read_bytes(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  float read_f32_le(const char* what) {
    const std::uint32_t bits = read_u32_le(what);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string read_string(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw StoreFormatError(StoreError::Truncated,
                             path_ + ": truncated while reading " +
                                 std::string(what));
    }
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StoreFormatError(StoreError::Io, "cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

}  // namespace detail

// --- binary embedding format ---
// Magic "NICE", version u8 = 1, dim u32 LE, record count u64 LE; then per
// record: photo_id length u16 LE, photo_id bytes, dim f32 LE values.

inline constexpr char kStoreMagic[4] = {'N', 'I', 'C', 'E'};
inline constexpr std::uint8_t kStoreVersion = 1;

inline void save_store(const EmbeddingStore& store, const std::string& path) {
  std::string buf;
  buf.append(kStoreMagic, 4);
  buf.push_back(static_cast<char>(kStoreVersion));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(store.dim()));
  detail::put_u64_le(buf, static_cast<std::uint64_t>(store.size()));
  for (const auto& [photo_id, embedding] : store.entries()) {
    if (photo_id.size() > 0xffff) {
      throw std::invalid_argument("save_store: photo_id longer than 65535: " +
                                  photo_id);
    }
    detail::put_u16_le(buf, static_cast<std::uint16_t>(photo_id.size()));
    buf += photo_id;
    for (float v : embedding.values) detail::put_f32_le(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw StoreFormatError(StoreError::Io, "save_store: write failed: " + path);
  }
}

inline EmbeddingStore load_store(const std::string& path) {
  detail::ByteReader reader(detail::slurp_file(path), path);
  char magic[4];
  reader.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kStoreMagic, 4) != 0) {
    throw StoreFormatError(StoreError::BadMagic,
                           path + ": not an embedding store (bad magic)");
  }
  const std::uint8_t version = reader.read_u8("version");
  if (version != kStoreVersion) {
    throw StoreFormatError(StoreError::BadVersion,
                           path + ": unsupported store version " +
                               std::to_string(version));
  }
  const std::uint32_t dim = reader.read_u32_le("dim");
  if (dim < 1) {
    throw StoreFormatError(StoreError::DimMismatch,
                           path + ": header declares dim 0");
  }
  const std::uint64_t count = reader.read_u64_le("record count");
  EmbeddingStore store(static_cast<int>(dim));
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint16_t id_len = reader.read_u16_le("photo_id length");
    std::string photo_id = reader.read_string(id_len, "photo_id");
    ImageEmbedding embedding;
    embedding.values.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      embedding.values[i] = reader.read_f32_le("embedding value");
    }
    store.add(std::move(photo_id), std::move(embedding));
  }
  return store;
}

// Deterministic stand-in for a CNN encoder: the vector is a pure function of
// (photo_id, dim, seed) with entries in [0, 1).
inline ImageEmbedding mock_embed(std::string_view photo_id, int dim,
                                 std::uint64_t seed) {
  if (dim < 1) {
    throw std::invalid_argument("mock_embed: dim must be >= 1");
  }
  Rng rng(fnv1a64(photo_id) ^ (seed * 0x9e3779b97f4a7c15ull));
  ImageEmbedding embedding;
  embedding.values.reserve(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    embedding.values.push_back(static_cast<float>(rng.next_double()));
  }
  return embedding;
}

// CSV import: one record per line, "photo_id,v1,...,vdim". The first row
// fixes the dimension; later rows must agree.
inline EmbeddingStore import_store_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw StoreFormatError(StoreError::Io, "cannot open " + path);
  }
  std::vector<std::pair<std::string, ImageEmbedding>> rows;
  std::string line;
  std::size_t line_no = 0;
  int dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 2) {
      throw StoreFormatError(StoreError::Truncated,
                             path + ":" + std::to_string(line_no) +
                                 ": expected photo_id and values");
    }
    ImageEmbedding embedding;
    embedding.values.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        embedding.values.push_back(std::stof(fields[i]));
      } catch (const std::exception&) {
        throw StoreFormatError(StoreError::Truncated,
                               path + ":" + std::to_string(line_no) +
                                   ": bad value '" + fields[i] + "'");
      }
    }
    if (dim < 0) {
      dim = embedding.dim();
    } else if (embedding.dim() != dim) {
      throw StoreFormatError(StoreError::DimMismatch,
                             path + ":" + std::to_string(line_no) +
                                 ": row has dim " +
                                 std::to_string(embedding.dim()) +
                                 ", expected " + std::to_string(dim));
    }
    rows.emplace_back(fields[0], std::move(embedding));
  }
  if (dim < 0) {
    throw StoreFormatError(StoreError::Truncated,
                           path + ": no records in CSV");
  }
  EmbeddingStore store(dim);
  for (auto& [photo_id, embedding] : rows) {
    store.add(std::move(photo_id), std::move(embedding));
  }
  return store;
}

}  // namespace capforge

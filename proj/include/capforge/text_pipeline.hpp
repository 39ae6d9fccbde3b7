#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace capforge {

// A caption as an ordered list of lowercase tokens, wrapped in the start/end
// markers produced by normalize_caption().
using TokenSequence = std::vector<std::string>;

inline constexpr const char* kNullToken = "<null>";
inline constexpr const char* kStartToken = "<startseq>";
inline constexpr const char* kEndToken = "<endseq>";
inline constexpr const char* kUnkToken = "<unk>";

// Reserved indices are fixed so the padding index is always 0.
inline constexpr int kNullIndex = 0;
inline constexpr int kStartIndex = 1;
inline constexpr int kEndIndex = 2;
inline constexpr int kUnkIndex = 3;
inline constexpr int kNumReserved = 4;

namespace detail {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_ascii_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& tokens, char sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(sep);
    out += tokens[i];
  }
  return out;
}

// Decodes one UTF-8 code point starting at i, advancing i. Malformed bytes
// decode to U+FFFD, which the transliterator drops.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  if ((b0 >> 5) == 0x6) {
    extra = 1;
    cp = b0 & 0x1f;
  } else if ((b0 >> 4) == 0xe) {
    extra = 2;
    cp = b0 & 0x0f;
  } else if ((b0 >> 3) == 0x1e) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + extra >= s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b >> 6) != 0x2) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3f);
  }
  i += extra + 1;
  return cp;
}

// Latin-to-ASCII fold for the accented ranges that actually show up in
// captions (Latin-1 supplement and Latin Extended-A). Code points without a
// mapping fold to the empty string and disappear.
inline std::string_view translit_latin(char32_t cp) {
  if (cp >= 0x00C0 && cp <= 0x00FF) {
    switch (cp) {
      case 0x00C6: case 0x00E6: return "ae";
      case 0x00D0: case 0x00F0: return "d";
      case 0x00D7: case 0x00F7: return "";
      case 0x00DE: case 0x00FE: return "th";
      case 0x00DF: return "ss";
      default: break;
    }
    const char32_t base = (cp >= 0x00E0) ? cp - 0x20 : cp;  // fold case
    if (base <= 0x00C5) return "a";
    if (base == 0x00C7) return "c";
    if (base <= 0x00CB) return "e";
    if (base <= 0x00CF) return "i";
    if (base == 0x00D1) return "n";
    if (base <= 0x00D6 || base == 0x00D8) return "o";
    if (base <= 0x00DC) return "u";
    if (base == 0x00DD) return "y";
    if (cp == 0x00FF) return "y";
    return "";
  }
  if (cp >= 0x0100 && cp <= 0x017F) {
    if (cp <= 0x0105) return "a";
    if (cp <= 0x010D) return "c";
    if (cp <= 0x0111) return "d";
    if (cp <= 0x011B) return "e";
    if (cp <= 0x0123) return "g";
    if (cp <= 0x0127) return "h";
    if (cp <= 0x0131) return "i";
    if (cp <= 0x0133) return "ij";
    if (cp <= 0x0135) return "j";
    if (cp <= 0x0138) return "k";
    if (cp <= 0x0142) return "l";
    if (cp <= 0x014B) return "n";
    if (cp <= 0x0151) return "o";
    if (cp <= 0x0153) return "oe";
    if (cp <= 0x0159) return "r";
    if (cp <= 0x0161) return "s";
    if (cp <= 0x0167) return "t";
    if (cp <= 0x0173) return "u";
    if (cp <= 0x0175) return "w";
    if (cp <= 0x0178) return "y";
    if (cp <= 0x017E) return "z";
    return "s";  // U+017F long s
  }
  return "";
}

inline const std::regex& website_regex() {
  // Domain pattern applied to the whole (already lowercased) string.
  static const std::regex re(R"([a-z:/.0-9]+\.(org|com|net))");
  return re;
}

}  // namespace detail

// The caption cleanse. Applies, in order: ASCII lowercasing, newline
// removal, '&' -> "and", website-domain substrings -> "website", any
// whitespace-delimited token containing a digit -> "num", Latin-to-ASCII
// transliteration, removal of remaining punctuation, whitespace
// tokenization, and start/end marker wrapping. Total over arbitrary input;
// an input with no surviving tokens yields exactly [<startseq>, <endseq>].
inline TokenSequence normalize_caption(std::string_view raw) {
  std::string text(raw);
  for (char& c : text) {
    if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
  }
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }

  std::string expanded;
  expanded.reserve(text.size());
  for (char c : text) {
    if (c == '&') {
      expanded += "and";
    } else {
      expanded.push_back(c);
    }
  }

  expanded = std::regex_replace(expanded, detail::website_regex(), "website");

  std::vector<std::string> words = detail::split_whitespace(expanded);
  for (auto& word : words) {
    if (std::any_of(word.begin(), word.end(),
                    [](char c) { return c >= '0' && c <= '9'; })) {
      word = "num";
    }
  }
  std::string flattened = detail::join(words, ' ');

  std::string ascii;
  ascii.reserve(flattened.size());
  for (std::size_t i = 0; i < flattened.size();) {
    const char32_t cp = detail::decode_utf8(flattened, i);
    if (cp < 0x80) {
      ascii.push_back(static_cast<char>(cp));
    } else {
      ascii += detail::translit_latin(cp);
    }
  }

  std::string cleaned;
  cleaned.reserve(ascii.size());
  for (char c : ascii) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == ' ') {
      cleaned.push_back(c);
    }
  }

  TokenSequence tokens;
  tokens.emplace_back(kStartToken);
  for (auto& tok : detail::split_whitespace(cleaned)) {
    tokens.push_back(std::move(tok));
  }
  tokens.emplace_back(kEndToken);
  return tokens;
}

// Token <-> index map with corpus counts. Reserved tokens occupy indices
// 0..3 (<null> is the padding index 0); content tokens follow, ordered by
// descending corpus frequency with lexicographic tie-break, so identical
// corpora always produce identical maps.
struct Vocabulary {
  std::unordered_map<std::string, int> token_to_index;
  std::vector<std::string> index_to_token;
  std::vector<std::int64_t> frequency;  // parallel to index_to_token
  int min_frequency = 1;

  int size() const { return static_cast<int>(index_to_token.size()); }

  bool contains(std::string_view token) const {
    return token_to_index.find(std::string(token)) != token_to_index.end();
  }

  // Out-of-vocabulary tokens map to <unk>.
  int index_of(std::string_view token) const {
    auto it = token_to_index.find(std::string(token));
    return it == token_to_index.end() ? kUnkIndex : it->second;
  }

  const std::string& token_at(int index) const {
    if (index < 0 || index >= size()) {
      throw std::out_of_range("Vocabulary::token_at: index " +
                              std::to_string(index) + " out of range [0, " +
                              std::to_string(size()) + ")");
    }
    return index_to_token[static_cast<std::size_t>(index)];
  }

  static bool is_reserved_index(int index) {
    return index >= 0 && index < kNumReserved;
  }
};

inline Vocabulary build_vocabulary(const std::vector<TokenSequence>& captions,
                                   int min_frequency) {
  if (captions.empty()) {
    throw std::invalid_argument(
        "build_vocabulary: empty caption collection, corpus unusable");
  }
  if (min_frequency < 1) {
    throw std::invalid_argument("build_vocabulary: min_frequency must be >= 1");
  }

  // std::map keeps tokens sorted, which makes the tie-break free.
  std::map<std::string, std::int64_t> counts;
  for (const auto& caption : captions) {
    for (const auto& token : caption) ++counts[token];
  }

  Vocabulary vocab;
  vocab.min_frequency = min_frequency;
  const char* reserved[kNumReserved] = {kNullToken, kStartToken, kEndToken,
                                        kUnkToken};
  for (int i = 0; i < kNumReserved; ++i) {
    vocab.index_to_token.emplace_back(reserved[i]);
    auto it = counts.find(reserved[i]);
    vocab.frequency.push_back(it == counts.end() ? 0 : it->second);
  }

  std::vector<std::pair<std::string, std::int64_t>> content;
  for (const auto& [token, count] : counts) {
    const bool reserved_token =
        token == kNullToken || token == kStartToken || token == kEndToken ||
        token == kUnkToken;
    if (!reserved_token && count >= min_frequency) {
      content.emplace_back(token, count);
    }
  }
  std::stable_sort(content.begin(), content.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  for (auto& [token, count] : content) {
    vocab.index_to_token.push_back(token);
    vocab.frequency.push_back(count);
  }

  for (int i = 0; i < vocab.size(); ++i) {
    vocab.token_to_index[vocab.index_to_token[static_cast<std::size_t>(i)]] = i;
  }
  return vocab;
}

// A caption as exactly max_len vocabulary indices; positions past
// true_length hold the <null> padding index.
struct EncodedCaption {
  std::vector<int> indices;
  int true_length = 0;

  int max_len() const { return static_cast<int>(indices.size()); }
};

inline EncodedCaption encode(const TokenSequence& tokens,
                             const Vocabulary& vocab, int max_len) {
  if (max_len < 2) {
    throw std::invalid_argument("encode: max_len must be >= 2");
  }
  EncodedCaption out;
  out.indices.assign(static_cast<std::size_t>(max_len), kNullIndex);
  out.true_length = static_cast<int>(
      std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(max_len)));
  for (int i = 0; i < out.true_length; ++i) {
    out.indices[static_cast<std::size_t>(i)] =
        vocab.index_of(tokens[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Inverse of encode up to truncation/OOV loss; padding indices are stripped
// and nothing is reinserted, so an all-pad input decodes to an empty list.
inline TokenSequence decode(const EncodedCaption& encoded,
                            const Vocabulary& vocab) {
  TokenSequence out;
  for (int idx : encoded.indices) {
    if (idx < 0 || idx >= vocab.size()) {
      throw std::out_of_range("decode: index " + std::to_string(idx) +
                              " outside vocabulary of size " +
                              std::to_string(vocab.size()));
    }
    if (idx == kNullIndex) continue;
    out.push_back(vocab.token_at(idx));
  }
  return out;
}

// --- vocabulary text format ---
// Header "VOCAB v1 <V> <min_frequency>", then one line per index:
// token<TAB>index<TAB>frequency.

inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_vocabulary: cannot open " + path);
  out << "VOCAB v1 " << vocab.size() << ' ' << vocab.min_frequency << '\n';
  for (int i = 0; i < vocab.size(); ++i) {
    out << vocab.index_to_token[static_cast<std::size_t>(i)] << '\t' << i
        << '\t' << vocab.frequency[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw std::runtime_error("save_vocabulary: write failed: " + path);
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_vocabulary: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  int size = 0;
  int min_frequency = 0;
  hs >> magic >> version >> size >> min_frequency;
  if (magic != "VOCAB" || version != "v1" || size < kNumReserved) {
    throw std::runtime_error("load_vocabulary: bad header in " + path);
  }
  Vocabulary vocab;
  vocab.min_frequency = min_frequency;
  vocab.index_to_token.resize(static_cast<std::size_t>(size));
  vocab.frequency.resize(static_cast<std::size_t>(size), 0);
  std::string line;
  int seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw std::runtime_error("load_vocabulary: malformed line: " + line);
    }
    const std::string token = line.substr(0, t1);
    const int index = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    const std::int64_t freq = std::stoll(line.substr(t2 + 1));
    if (index < 0 || index >= size) {
      throw std::runtime_error("load_vocabulary: index out of range: " + line);
    }
    vocab.index_to_token[static_cast<std::size_t>(index)] = token;
    vocab.frequency[static_cast<std::size_t>(index)] = freq;
    ++seen;
  }
  if (seen != size) {
    throw std::runtime_error("load_vocabulary: expected " +
                             std::to_string(size) + " entries, found " +
                             std::to_string(seen));
  }
  for (int i = 0; i < size; ++i) {
    vocab.token_to_index[vocab.index_to_token[static_cast<std::size_t>(i)]] = i;
  }
  if (vocab.index_to_token[0] != kNullToken ||
      vocab.index_to_token[1] != kStartToken ||
      vocab.index_to_token[2] != kEndToken ||
      vocab.index_to_token[3] != kUnkToken) {
    throw std::runtime_error("load_vocabulary: reserved tokens out of place");
  }
  return vocab;
}

}  // namespace capforge

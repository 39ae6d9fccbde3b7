#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "capforge/dataset.hpp"
#include "capforge/text_pipeline.hpp"

namespace capforge {

// Raw caption input: one JSON object per line with fields photo_id (string),
// caption (string) and optional label (string).
struct RawCaption {
  std::string photo_id;
  std::string caption;
  std::string label;
};

// A generated caption with its quality score and per-token probabilities.
struct PredictionRecord {
  std::string photo_id;
  std::vector<std::string> tokens;
  double score = 0.0;
  std::vector<double> omegas;
};

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line,
                                       const std::string& path,
                                       std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                             e.what());
  }
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    fn(parse_jsonl_line(line, path, line_no), line_no);
  }
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& path, std::size_t line_no) {
  if (!obj.contains(key) || !obj[key].is_string()) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": missing string field '" + key + "'");
  }
  return obj[key].get<std::string>();
}

}  // namespace detail

inline std::vector<RawCaption> read_caption_jsonl(const std::string& path) {
  std::vector<RawCaption> records;
  detail::for_each_jsonl(path, [&](const nlohmann::json& obj, std::size_t ln) {
    RawCaption rec;
    rec.photo_id = detail::require_string(obj, "photo_id", path, ln);
    rec.caption = detail::require_string(obj, "caption", path, ln);
    if (obj.contains("label") && obj["label"].is_string()) {
      rec.label = obj["label"].get<std::string>();
    }
    records.push_back(std::move(rec));
  });
  return records;
}

inline void write_tokens_jsonl(const std::vector<CaptionRecord>& records,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& rec : records) {
    nlohmann::json obj;
    obj["photo_id"] = rec.photo_id;
    obj["tokens"] = rec.tokens;
    if (!rec.label.empty()) obj["label"] = rec.label;
    out << obj.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<CaptionRecord> read_tokens_jsonl(const std::string& path) {
  std::vector<CaptionRecord> records;
  detail::for_each_jsonl(path, [&](const nlohmann::json& obj, std::size_t ln) {
    CaptionRecord rec;
    rec.photo_id = detail::require_string(obj, "photo_id", path, ln);
    if (!obj.contains("tokens") || !obj["tokens"].is_array()) {
      throw std::runtime_error(path + ":" + std::to_string(ln) +
                               ": missing array field 'tokens'");
    }
    rec.tokens = obj["tokens"].get<std::vector<std::string>>();
    if (obj.contains("label") && obj["label"].is_string()) {
      rec.label = obj["label"].get<std::string>();
    }
    records.push_back(std::move(rec));
  });
  return records;
}

inline void write_predictions_jsonl(const std::vector<PredictionRecord>& preds,
                                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& pred : preds) {
    nlohmann::json obj;
    obj["photo_id"] = pred.photo_id;
    std::string caption;
    for (std::size_t i = 0; i < pred.tokens.size(); ++i) {
      if (i) caption.push_back(' ');
      caption += pred.tokens[i];
    }
    obj["caption"] = caption;
    obj["score"] = pred.score;
    obj["omegas"] = pred.omegas;
    out << obj.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<PredictionRecord> read_predictions_jsonl(
    const std::string& path) {
  std::vector<PredictionRecord> preds;
  detail::for_each_jsonl(path, [&](const nlohmann::json& obj, std::size_t ln) {
    PredictionRecord pred;
    pred.photo_id = detail::require_string(obj, "photo_id", path, ln);
    const std::string caption =
        detail::require_string(obj, "caption", path, ln);
    pred.tokens = detail::split_whitespace(caption);
    if (obj.contains("score")) pred.score = obj["score"].get<double>();
    if (obj.contains("omegas") && obj["omegas"].is_array()) {
      pred.omegas = obj["omegas"].get<std::vector<double>>();
    }
    preds.push_back(std::move(pred));
  });
  return preds;
}

}  // namespace capforge

#pragma once

#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "capforge/io.hpp"
#include "capforge/metrics.hpp"
#include "capforge/parallel.hpp"

namespace capforge {

struct EvaluateOptions {
  bool group_by_label = false;
  RougeMode rouge_mode = RougeMode::F1;
  int jobs = 1;
};

namespace detail {

struct ReferenceEntry {
  TokenList tokens;
  std::string label;
};

inline TokenList strip_markers(const TokenSequence& tokens) {
  TokenList out;
  for (const auto& token : tokens) {
    if (token != kStartToken && token != kEndToken && token != kNullToken) {
      out.push_back(token);
    }
  }
  return out;
}

// Per-pair LCS runs across `jobs` threads; scores then reduce in index
// order, so results do not depend on the thread count.
inline MetricScores score_pairs_parallel(
    const std::vector<TokenList>& candidates,
    const std::vector<TokenList>& references, RougeMode mode, int jobs) {
  MetricScores scores;
  scores.pair_count = candidates.size();
  for (int n = 1; n <= 4; ++n) {
    scores.bleu[n] = bleu_n(candidates, references, n);
  }
  std::vector<double> pair_scores(candidates.size(), 0.0);
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    const TokenList& candidate = candidates[i];
    const TokenList& reference = references[i];
    if (candidate.empty() || reference.empty()) return;
    const auto lcs = static_cast<double>(lcs_length(candidate, reference));
    const double recall = lcs / static_cast<double>(reference.size());
    if (mode == RougeMode::Recall) {
      pair_scores[i] = recall;
      return;
    }
    const double precision = lcs / static_cast<double>(candidate.size());
    if (precision + recall > 0.0) {
      pair_scores[i] = 2.0 * precision * recall / (precision + recall);
    }
  });
  double sum = 0.0;
  for (double s : pair_scores) sum += s;
  scores.rouge_l = sum / static_cast<double>(candidates.size());
  const auto [terms, avg_len] = diversity_stats(candidates);
  scores.terms_generated = terms;
  scores.avg_caption_len = avg_len;
  return scores;
}

}  // namespace detail

// Scores a prediction file against a reference file. References may carry
// either pre-normalized "tokens" or a raw "caption", which is normalized
// here; markers are stripped on both sides. Every prediction must have a
// reference with the same photo_id.
inline EvaluationReport evaluate_run(const std::string& predictions_path,
                                     const std::string& references_path,
                                     const EvaluateOptions& options = {}) {
  std::unordered_map<std::string, detail::ReferenceEntry> references;
  detail::for_each_jsonl(
      references_path, [&](const nlohmann::json& obj, std::size_t ln) {
        detail::ReferenceEntry entry;
        const std::string photo_id =
            detail::require_string(obj, "photo_id", references_path, ln);
        if (obj.contains("tokens") && obj["tokens"].is_array()) {
          entry.tokens = detail::strip_markers(
              obj["tokens"].get<std::vector<std::string>>());
        } else {
          entry.tokens = detail::strip_markers(normalize_caption(
              detail::require_string(obj, "caption", references_path, ln)));
        }
        if (obj.contains("label") && obj["label"].is_string()) {
          entry.label = obj["label"].get<std::string>();
        }
        references.emplace(photo_id, std::move(entry));
      });

  const std::vector<PredictionRecord> predictions =
      read_predictions_jsonl(predictions_path);
  if (predictions.empty()) {
    throw std::runtime_error("evaluate_run: no predictions in " +
                             predictions_path);
  }

  std::vector<TokenList> candidate_tokens;
  std::vector<TokenList> reference_tokens;
  std::vector<std::string> labels;
  candidate_tokens.reserve(predictions.size());
  reference_tokens.reserve(predictions.size());
  labels.reserve(predictions.size());
  for (const auto& pred : predictions) {
    auto it = references.find(pred.photo_id);
    if (it == references.end()) {
      throw std::runtime_error("evaluate_run: no reference for photo_id '" +
                               pred.photo_id + "'");
    }
    candidate_tokens.push_back(detail::strip_markers(pred.tokens));
    reference_tokens.push_back(it->second.tokens);
    labels.push_back(it->second.label);
  }

  EvaluationReport report;
  report.rouge_mode = options.rouge_mode;
  report.overall = detail::score_pairs_parallel(
      candidate_tokens, reference_tokens, options.rouge_mode, options.jobs);

  if (options.group_by_label) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!labels[i].empty()) groups[labels[i]].push_back(i);
    }
    for (const auto& [label, indices] : groups) {
      std::vector<TokenList> cands, refs;
      cands.reserve(indices.size());
      refs.reserve(indices.size());
      for (std::size_t i : indices) {
        cands.push_back(candidate_tokens[i]);
        refs.push_back(reference_tokens[i]);
      }
      report.per_label[label] = detail::score_pairs_parallel(
          cands, refs, options.rouge_mode, options.jobs);
    }
  }
  return report;
}

inline nlohmann::json scores_to_json(const MetricScores& scores) {
  nlohmann::json obj;
  for (const auto& [n, value] : scores.bleu) {
    obj["bleu"][std::to_string(n)] = value;
  }
  obj["rouge_l"] = scores.rouge_l;
  obj["terms_generated"] = scores.terms_generated;
  obj["avg_caption_len"] = scores.avg_caption_len;
  obj["pair_count"] = scores.pair_count;
  return obj;
}

inline nlohmann::json report_to_json(const EvaluationReport& report) {
  nlohmann::json obj = scores_to_json(report.overall);
  obj["rouge_mode"] = report.rouge_mode == RougeMode::F1 ? "f1" : "recall";
  for (const auto& [label, scores] : report.per_label) {
    obj["per_label"][label] = scores_to_json(scores);
  }
  return obj;
}

// Aligned text table, one row per scope.
inline std::string format_report_table(const EvaluationReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %7s %7s %7s %7s %7s %7s %6s %7s\n",
                "scope", "pairs", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
                "ROUGE-L", "terms", "avglen");
  out += line;
  auto emit = [&](const std::string& name, const MetricScores& s) {
    std::snprintf(line, sizeof(line),
                  "%-12s %7zu %7.4f %7.4f %7.4f %7.4f %7.4f %6lld %7.2f\n",
                  name.c_str(), s.pair_count, s.bleu.at(1), s.bleu.at(2),
                  s.bleu.at(3), s.bleu.at(4), s.rouge_l,
                  static_cast<long long>(s.terms_generated),
                  s.avg_caption_len);
    out += line;
  };
  emit("overall", report.overall);
  for (const auto& [label, scores] : report.per_label) emit(label, scores);
  return out;
}

}  // namespace capforge

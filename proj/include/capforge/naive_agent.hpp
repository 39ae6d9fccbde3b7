#pragma once

#include <string>
#include <vector>

#include "capforge/decoder.hpp"
#include "capforge/embedding_store.hpp"
#include "capforge/ngram_lm.hpp"
#include "capforge/text_pipeline.hpp"

namespace capforge {

// Demonstration corpus for the image-blind decoding pathology: "the" leads
// most captions but its continuations are diffuse, "chicken" is the
// runner-up lead and is always followed by "and", and "waffles" is the
// second most common continuation of "chicken and". A trigram model decoded
// with beam width 2 keeps the runner-up at every step, so "chicken and
// waffles" enters the population without the model ever seeing an image.
inline std::vector<std::string> naive_agent_corpus() {
  return {
      "the pizza",
      "the burger",
      "the salad",
      "the soup",
      "the fries",
      "the wings",
      "chicken and rice",
      "chicken and rice",
      "chicken and rice",
      "chicken and waffles",
      "chicken and waffles",
  };
}

struct NaiveAgentDemo {
  NgramModel model;
  std::vector<std::vector<Candidate>> trace;  // population per iteration
  std::vector<Candidate> population;          // final population
  bool contains_chicken_and_waffles = false;
};

inline NaiveAgentDemo run_naive_agent_demo(
    const BeamConfig& config = BeamConfig{2, 2, 0.6, 15}) {
  std::vector<TokenSequence> captions;
  for (const auto& raw : naive_agent_corpus()) {
    captions.push_back(normalize_caption(raw));
  }
  const Vocabulary vocab = build_vocabulary(captions, 1);

  NaiveAgentDemo demo{train_ngram(captions, 3, vocab), {}, {}, false};
  const ImageEmbedding unused = mock_embed("naive-agent", 8, 0);
  demo.population = beam_search(demo.model, unused, config, &demo.trace);

  const TokenSequence wanted = {kStartToken, "chicken", "and", "waffles",
                                kEndToken};
  for (const auto& candidate : demo.population) {
    if (candidate.tokens == wanted) {
      demo.contains_chicken_and_waffles = true;
      break;
    }
  }
  return demo;
}

}  // namespace capforge

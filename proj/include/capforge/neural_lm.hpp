#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/rng.hpp"
#include "capforge/scorer.hpp"

namespace capforge {

enum class ArchKind : std::uint8_t { Inject = 0, MergeConcat = 1, MergeAdd = 2 };

inline const char* arch_name(ArchKind kind) {
  switch (kind) {
    case ArchKind::Inject: return "inject";
    case ArchKind::MergeConcat: return "merge_concat";
    case ArchKind::MergeAdd: return "merge_add";
  }
  return "?";
}

inline ArchKind arch_from_name(const std::string& name) {
  if (name == "inject") return ArchKind::Inject;
  if (name == "merge_concat" || name == "merge-concat") return ArchKind::MergeConcat;
  if (name == "merge_add" || name == "merge-add") return ArchKind::MergeAdd;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

// Shape of one captioning model. The inject model feeds the projected image
// through the LSTM as the first "word", so its projection, word-embedding
// and hidden sizes must agree; merge models combine the projected image with
// the LSTM output after the recurrence, by concatenation or addition.
struct ArchitectureSpec {
  ArchKind kind = ArchKind::MergeConcat;
  int embedding_dim = 256;
  int lstm_hidden_dim = 256;
  int image_dense_dim = 256;
  int image_input_dim = 4096;
  int vocab_size = 0;
  int max_len = 15;

  int combined_dim() const {
    return kind == ArchKind::MergeConcat ? image_dense_dim + lstm_hidden_dim
                                         : lstm_hidden_dim;
  }

  void validate() const {
    if (embedding_dim < 1 || lstm_hidden_dim < 1 || image_dense_dim < 1 ||
        image_input_dim < 1) {
      throw std::invalid_argument("ArchitectureSpec: dims must be >= 1");
    }
    if (vocab_size <= kNumReserved) {
      throw std::invalid_argument(
          "ArchitectureSpec: vocab_size must exceed the reserved tokens");
    }
    if (max_len < 2) {
      throw std::invalid_argument("ArchitectureSpec: max_len must be >= 2");
    }
    if (kind == ArchKind::Inject &&
        (image_dense_dim != embedding_dim ||
         embedding_dim != lstm_hidden_dim)) {
      throw std::invalid_argument(
          "inject: image_dense_dim, embedding_dim and lstm_hidden_dim must "
          "agree (the image acts as the first word)");
    }
    if (kind == ArchKind::MergeAdd && image_dense_dim != lstm_hidden_dim) {
      throw std::invalid_argument(
          "merge_add: image_dense_dim must equal lstm_hidden_dim "
          "(activations are added elementwise)");
    }
  }
};

// Paper-default dimensions: 300 everywhere for inject, 256 for the merges.
inline ArchitectureSpec default_spec(ArchKind kind, int vocab_size,
                                     int image_input_dim = 4096,
                                     int max_len = 15) {
  ArchitectureSpec spec;
  spec.kind = kind;
  const int width = (kind == ArchKind::Inject) ? 300 : 256;
  spec.embedding_dim = width;
  spec.lstm_hidden_dim = width;
  spec.image_dense_dim = width;
  spec.image_input_dim = image_input_dim;
  spec.vocab_size = vocab_size;
  spec.max_len = max_len;
  return spec;
}

// All trainable parameters. LSTM gate order is input, forget, cell, output.
struct ModelParameters {
  Eigen::MatrixXd word_embedding;  // vocab_size x embedding_dim
  Eigen::MatrixXd image_proj_w;    // image_dense_dim x image_input_dim
  Eigen::VectorXd image_proj_b;    // image_dense_dim
  Eigen::MatrixXd lstm_w[4];       // lstm_hidden_dim x embedding_dim
  Eigen::MatrixXd lstm_u[4];       // lstm_hidden_dim x lstm_hidden_dim
  Eigen::VectorXd lstm_b[4];       // lstm_hidden_dim
  Eigen::MatrixXd output_w;        // combined_dim x vocab_size
  Eigen::VectorXd output_b;        // vocab_size

  bool all_finite() const {
    bool ok = true;
    auto check = [&ok](const auto& m) { ok = ok && m.allFinite(); };
    check(word_embedding);
    check(image_proj_w);
    check(image_proj_b);
    for (int g = 0; g < 4; ++g) check(lstm_w[g]);
    for (int g = 0; g < 4; ++g) check(lstm_u[g]);
    for (int g = 0; g < 4; ++g) check(lstm_b[g]);
    check(output_w);
    check(output_b);
    return ok;
  }
};

namespace detail {

// Visits every parameter block in declared (serialization) order.
template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  fn(p.word_embedding);
  fn(p.image_proj_w);
  fn(p.image_proj_b);
  for (int g = 0; g < 4; ++g) fn(p.lstm_w[g]);
  for (int g = 0; g < 4; ++g) fn(p.lstm_u[g]);
  for (int g = 0; g < 4; ++g) fn(p.lstm_b[g]);
  fn(p.output_w);
  fn(p.output_b);
}

template <typename A, typename B, typename Fn>
void visit_params_pair(A& a, B& b, Fn&& fn) {
  fn(a.word_embedding, b.word_embedding);
  fn(a.image_proj_w, b.image_proj_w);
  fn(a.image_proj_b, b.image_proj_b);
  for (int g = 0; g < 4; ++g) fn(a.lstm_w[g], b.lstm_w[g]);
  for (int g = 0; g < 4; ++g) fn(a.lstm_u[g], b.lstm_u[g]);
  for (int g = 0; g < 4; ++g) fn(a.lstm_b[g], b.lstm_b[g]);
  fn(a.output_w, b.output_w);
  fn(a.output_b, b.output_b);
}

template <typename A, typename B, typename C, typename Fn>
void visit_params_triple(A& a, B& b, C& c, Fn&& fn) {
  fn(a.word_embedding, b.word_embedding, c.word_embedding);
  fn(a.image_proj_w, b.image_proj_w, c.image_proj_w);
  fn(a.image_proj_b, b.image_proj_b, c.image_proj_b);
  for (int g = 0; g < 4; ++g) fn(a.lstm_w[g], b.lstm_w[g], c.lstm_w[g]);
  for (int g = 0; g < 4; ++g) fn(a.lstm_u[g], b.lstm_u[g], c.lstm_u[g]);
  for (int g = 0; g < 4; ++g) fn(a.lstm_b[g], b.lstm_b[g], c.lstm_b[g]);
  fn(a.output_w, b.output_w, c.output_w);
  fn(a.output_b, b.output_b, c.output_b);
}

}  // namespace detail

inline ModelParameters zeros_like(const ArchitectureSpec& spec) {
  const int E = spec.embedding_dim;
  const int H = spec.lstm_hidden_dim;
  ModelParameters p;
  p.word_embedding = Eigen::MatrixXd::Zero(spec.vocab_size, E);
  p.image_proj_w = Eigen::MatrixXd::Zero(spec.image_dense_dim, spec.image_input_dim);
  p.image_proj_b = Eigen::VectorXd::Zero(spec.image_dense_dim);
  for (int g = 0; g < 4; ++g) {
    p.lstm_w[g] = Eigen::MatrixXd::Zero(H, E);
    p.lstm_u[g] = Eigen::MatrixXd::Zero(H, H);
    p.lstm_b[g] = Eigen::VectorXd::Zero(H);
  }
  p.output_w = Eigen::MatrixXd::Zero(spec.combined_dim(), spec.vocab_size);
  p.output_b = Eigen::VectorXd::Zero(spec.vocab_size);
  return p;
}

// Deterministic initialization: each weight matrix uniform in [-s, s] with
// s = sqrt(6 / (rows + cols)), biases zero except the LSTM forget-gate bias,
// which starts at 1.
inline ModelParameters build_model(const ArchitectureSpec& spec,
                                   std::uint64_t seed) {
  spec.validate();
  ModelParameters p = zeros_like(spec);
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m) {
    const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = rng.next_in(-s, s);
      }
    }
  };
  fill(p.word_embedding);
  fill(p.image_proj_w);
  for (int g = 0; g < 4; ++g) fill(p.lstm_w[g]);
  for (int g = 0; g < 4; ++g) fill(p.lstm_u[g]);
  fill(p.output_w);
  p.lstm_b[1].setOnes();  // forget gate
  return p;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmStepCache {
  Eigen::VectorXd x, i, f, g, o, c, h, tanh_c;
};

struct ForwardCache {
  std::vector<int> word_indices;       // prefix tokens consumed, in order
  std::vector<LstmStepCache> steps;    // one per LSTM step
  Eigen::VectorXd image_input;         // raw embedding as doubles
  Eigen::VectorXd image_pre;           // projection pre-activation
  Eigen::VectorXd image_act;           // projection activation
  Eigen::VectorXd combined;
  Eigen::VectorXd probs;               // masked softmax over vocab
};

inline Eigen::VectorXd to_vector(const ImageEmbedding& embedding) {
  Eigen::VectorXd v(embedding.dim());
  for (int i = 0; i < embedding.dim(); ++i) {
    v(i) = static_cast<double>(embedding.values[static_cast<std::size_t>(i)]);
  }
  return v;
}

inline void masked_softmax(const Eigen::VectorXd& logits,
                           Eigen::VectorXd& probs) {
  const auto n = logits.size();
  probs.setZero(n);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == kNullIndex || i == kStartIndex) continue;
    max_logit = std::max(max_logit, logits(i));
  }
  double denom = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == kNullIndex || i == kStartIndex) continue;
    probs(i) = std::exp(logits(i) - max_logit);
    denom += probs(i);
  }
  probs /= denom;
  probs(kNullIndex) = 0.0;
  probs(kStartIndex) = 0.0;
}

// Single-example forward pass. The LSTM consumes only true_length
// embeddings; <null> padding is never fed through the recurrence.
inline void forward_example(const ModelParameters& params,
                            const ArchitectureSpec& spec,
                            const ImageEmbedding& embedding,
                            const EncodedCaption& prefix,
                            ForwardCache& cache) {
  if (embedding.dim() != spec.image_input_dim) {
    throw std::invalid_argument(
        "forward: embedding dim " + std::to_string(embedding.dim()) +
        " does not match model image_input_dim " +
        std::to_string(spec.image_input_dim));
  }
  if (prefix.true_length < 1) {
    throw std::invalid_argument("forward: prefix true_length must be >= 1");
  }

  const int H = spec.lstm_hidden_dim;
  cache.image_input = to_vector(embedding);
  cache.image_pre = params.image_proj_w * cache.image_input + params.image_proj_b;
  if (spec.kind == ArchKind::Inject) {
    cache.image_act = cache.image_pre;
  } else {
    cache.image_act = cache.image_pre.cwiseMax(0.0);
  }

  cache.word_indices.clear();
  const int consumed = std::min(prefix.true_length, spec.max_len);
  for (int t = 0; t < consumed; ++t) {
    cache.word_indices.push_back(prefix.indices[static_cast<std::size_t>(t)]);
  }

  std::vector<Eigen::VectorXd> inputs;
  if (spec.kind == ArchKind::Inject) {
    inputs.push_back(cache.image_act);
  }
  for (int idx : cache.word_indices) {
    inputs.push_back(params.word_embedding.row(idx).transpose());
  }

  cache.steps.clear();
  cache.steps.resize(inputs.size());
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(H);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    LstmStepCache& step = cache.steps[t];
    step.x = inputs[t];
    const Eigen::VectorXd zi = params.lstm_w[0] * step.x + params.lstm_u[0] * h_prev + params.lstm_b[0];
    const Eigen::VectorXd zf = params.lstm_w[1] * step.x + params.lstm_u[1] * h_prev + params.lstm_b[1];
    const Eigen::VectorXd zg = params.lstm_w[2] * step.x + params.lstm_u[2] * h_prev + params.lstm_b[2];
    const Eigen::VectorXd zo = params.lstm_w[3] * step.x + params.lstm_u[3] * h_prev + params.lstm_b[3];
    step.i = zi.unaryExpr([](double v) { return sigmoid(v); });
    step.f = zf.unaryExpr([](double v) { return sigmoid(v); });
    step.g = zg.array().tanh();
    step.o = zo.unaryExpr([](double v) { return sigmoid(v); });
    step.c = step.f.cwiseProduct(c_prev) + step.i.cwiseProduct(step.g);
    step.tanh_c = step.c.array().tanh();
    step.h = step.o.cwiseProduct(step.tanh_c);
    h_prev = step.h;
    c_prev = step.c;
  }

  const Eigen::VectorXd& h_last = cache.steps.back().h;
  switch (spec.kind) {
    case ArchKind::Inject:
      cache.combined = h_last;
      break;
    case ArchKind::MergeConcat:
      cache.combined.resize(spec.image_dense_dim + H);
      cache.combined << cache.image_act, h_last;
      break;
    case ArchKind::MergeAdd:
      cache.combined = cache.image_act + h_last;
      break;
  }

  const Eigen::VectorXd logits =
      params.output_w.transpose() * cache.combined + params.output_b;
  masked_softmax(logits, cache.probs);
}

// Single-example backward pass; accumulates into grads.
inline void backward_example(const ModelParameters& params,
                             const ArchitectureSpec& spec, int target,
                             const ForwardCache& cache,
                             ModelParameters& grads) {
  const int H = spec.lstm_hidden_dim;

  // Softmax cross-entropy: d logits = p - onehot(target) on unmasked entries.
  Eigen::VectorXd dlogits = cache.probs;
  dlogits(target) -= 1.0;

  grads.output_w += cache.combined * dlogits.transpose();
  grads.output_b += dlogits;
  const Eigen::VectorXd dcombined = params.output_w * dlogits;

  Eigen::VectorXd dh = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dimage_act = Eigen::VectorXd::Zero(spec.image_dense_dim);
  switch (spec.kind) {
    case ArchKind::Inject:
      dh = dcombined;
      break;
    case ArchKind::MergeConcat:
      dimage_act = dcombined.head(spec.image_dense_dim);
      dh = dcombined.tail(H);
      break;
    case ArchKind::MergeAdd:
      dimage_act = dcombined;
      dh = dcombined;
      break;
  }

  // Backpropagation through time.
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);
  for (int t = static_cast<int>(cache.steps.size()) - 1; t >= 0; --t) {
    const LstmStepCache& step = cache.steps[static_cast<std::size_t>(t)];
    const Eigen::VectorXd c_prev =
        (t == 0) ? Eigen::VectorXd::Zero(H).eval()
                 : cache.steps[static_cast<std::size_t>(t - 1)].c;
    const Eigen::VectorXd h_prev =
        (t == 0) ? Eigen::VectorXd::Zero(H).eval()
                 : cache.steps[static_cast<std::size_t>(t - 1)].h;

    const Eigen::VectorXd do_ = dh.cwiseProduct(step.tanh_c);
    dc += dh.cwiseProduct(step.o).cwiseProduct(
        (1.0 - step.tanh_c.array().square()).matrix());
    const Eigen::VectorXd di = dc.cwiseProduct(step.g);
    const Eigen::VectorXd dg = dc.cwiseProduct(step.i);
    const Eigen::VectorXd df = dc.cwiseProduct(c_prev);
    const Eigen::VectorXd dc_prev = dc.cwiseProduct(step.f);

    const Eigen::VectorXd dzi =
        di.cwiseProduct(step.i).cwiseProduct((1.0 - step.i.array()).matrix());
    const Eigen::VectorXd dzf =
        df.cwiseProduct(step.f).cwiseProduct((1.0 - step.f.array()).matrix());
    const Eigen::VectorXd dzg =
        dg.cwiseProduct((1.0 - step.g.array().square()).matrix());
    const Eigen::VectorXd dzo =
        do_.cwiseProduct(step.o).cwiseProduct((1.0 - step.o.array()).matrix());

    const Eigen::VectorXd* dz[4] = {&dzi, &dzf, &dzg, &dzo};
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(step.x.size());
    Eigen::VectorXd dh_prev = Eigen::VectorXd::Zero(H);
    for (int g = 0; g < 4; ++g) {
      grads.lstm_w[g] += *dz[g] * step.x.transpose();
      grads.lstm_u[g] += *dz[g] * h_prev.transpose();
      grads.lstm_b[g] += *dz[g];
      dx += params.lstm_w[g].transpose() * *dz[g];
      dh_prev += params.lstm_u[g].transpose() * *dz[g];
    }

    const bool is_image_step = (spec.kind == ArchKind::Inject && t == 0);
    if (is_image_step) {
      dimage_act += dx;
    } else {
      const int word_offset = (spec.kind == ArchKind::Inject) ? t - 1 : t;
      const int word = cache.word_indices[static_cast<std::size_t>(word_offset)];
      grads.word_embedding.row(word) += dx.transpose();
    }

    dh = dh_prev;
    dc = dc_prev;
  }

  Eigen::VectorXd dimage_pre = dimage_act;
  if (spec.kind != ArchKind::Inject) {
    for (Eigen::Index i = 0; i < dimage_pre.size(); ++i) {
      if (cache.image_pre(i) <= 0.0) dimage_pre(i) = 0.0;
    }
  }
  grads.image_proj_w += dimage_pre * cache.image_input.transpose();
  grads.image_proj_b += dimage_pre;
}

}  // namespace detail

// Next-token distribution for one (image, prefix) pair; the scorer-contract
// entry point for neural models.
inline NextTokenDistribution forward(const ModelParameters& params,
                                     const ArchitectureSpec& spec,
                                     const ImageEmbedding& embedding,
                                     const EncodedCaption& prefix) {
  detail::ForwardCache cache;
  detail::forward_example(params, spec, embedding, prefix, cache);
  NextTokenDistribution dist;
  dist.probabilities.assign(cache.probs.data(),
                            cache.probs.data() + cache.probs.size());
  return dist;
}

// Mean categorical cross-entropy, -log P(target | prefix, image), over a
// batch.
inline double loss(const ModelParameters& params, const ArchitectureSpec& spec,
                   const std::vector<TrainingExample>& batch,
                   const EmbeddingStore& store) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  detail::ForwardCache cache;
  double total = 0.0;
  for (const auto& example : batch) {
    detail::forward_example(params, spec, store.at(example.photo_id),
                            example.prefix, cache);
    total += -std::log(cache.probs(example.target));
  }
  return total / static_cast<double>(batch.size());
}

// Analytic gradient of loss() via backpropagation through time, averaged
// over the batch. Returns the loss alongside the gradient since the forward
// pass is shared.
inline double gradient(const ModelParameters& params,
                       const ArchitectureSpec& spec,
                       const std::vector<TrainingExample>& batch,
                       const EmbeddingStore& store, ModelParameters& grads) {
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  grads = zeros_like(spec);
  detail::ForwardCache cache;
  double total = 0.0;
  for (const auto& example : batch) {
    detail::forward_example(params, spec, store.at(example.photo_id),
                            example.prefix, cache);
    total += -std::log(cache.probs(example.target));
    detail::backward_example(params, spec, example.target, cache, grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  detail::visit_params(grads, [inv](auto& m) { m *= inv; });
  return total * inv;
}

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double decay = 1e-6;
  int batch_size = 64;
  int max_epochs = 30;
  int patience = 2;  // consecutive non-improving epochs; <= 0 disables
  std::uint64_t seed = 0;
};

// Learning rate after t updates under the decay rule eta / (1 + t * decay).
inline double effective_learning_rate(double base, double decay,
                                      std::uint64_t iteration) {
  return base / (1.0 + static_cast<double>(iteration) * decay);
}

struct LossHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;  // 1-based epoch of the minimum validation loss
};

struct TrainResult {
  ModelParameters params;
  LossHistory history;
};

// SGD with Nesterov momentum: the gradient is evaluated at the lookahead
// point theta + mu * v, then v <- mu * v - eta_t * grad and
// theta <- theta + v, with the learning rate decayed per iteration.
// Training stops at max_epochs or once validation loss has not improved for
// `patience` consecutive epochs; the returned parameters are the snapshot
// from the best validation epoch.
inline TrainResult train(const ArchitectureSpec& spec,
                         const std::vector<TrainingExample>& train_examples,
                         const std::vector<TrainingExample>& val_examples,
                         const EmbeddingStore& store,
                         const TrainConfig& config) {
  spec.validate();
  if (train_examples.empty()) {
    throw std::invalid_argument("train: empty training dataset");
  }
  if (val_examples.empty()) {
    throw std::invalid_argument("train: a validation set is required");
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("train: batch_size must be >= 1");
  }

  ModelParameters params = build_model(spec, config.seed);
  ModelParameters velocity = zeros_like(spec);
  ModelParameters grads = zeros_like(spec);
  Rng shuffle_rng(config.seed ^ 0x5e3d1ab1c0ffee11ull);

  TrainResult result;
  result.params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  std::uint64_t iteration = 0;

  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(train_examples[order[k]]);
      }

      // Lookahead, gradient, velocity and parameter updates.
      detail::visit_params_pair(params, velocity, [&](auto& p, auto& v) {
        p += config.momentum * v;
      });
      const double batch_loss = gradient(params, spec, batch, store, grads);
      detail::visit_params_pair(params, velocity, [&](auto& p, auto& v) {
        p -= config.momentum * v;
      });
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error(
            "train: loss diverged (non-finite) at epoch " +
            std::to_string(epoch) + ", iteration " + std::to_string(iteration));
      }
      const double eta = effective_learning_rate(config.learning_rate,
                                                 config.decay, iteration);
      detail::visit_params_triple(params, velocity, grads,
                                  [&](auto& p, auto& v, auto& g) {
                                    v = config.momentum * v - eta * g;
                                    p += v;
                                  });
      ++iteration;
      epoch_loss_sum += batch_loss * static_cast<double>(batch.size());
      seen += batch.size();
    }

    const double train_loss = epoch_loss_sum / static_cast<double>(seen);
    const double val_loss = loss(params, spec, val_examples, store);
    if (!std::isfinite(val_loss)) {
      throw std::runtime_error(
          "train: validation loss diverged (non-finite) at epoch " +
          std::to_string(epoch));
    }
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      result.params = params;
      result.history.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (config.patience > 0 && epochs_since_best >= config.patience) break;
    }
  }
  return result;
}

// --- model binary format ---
// Magic "NICM", version u8 = 1, kind u8, then u32 LE fields embedding_dim,
// lstm_hidden_dim, image_dense_dim, image_input_dim, vocab_size, max_len;
// then every parameter block in declared order (word_embedding,
// image_proj_w, image_proj_b, lstm_w[i,f,g,o], lstm_u[i,f,g,o],
// lstm_b[i,f,g,o], output_w, output_b), row-major f32 LE.

inline constexpr char kModelMagic[4] = {'N', 'I', 'C', 'M'};
inline constexpr std::uint8_t kModelVersion = 1;

inline void save_model(const ModelParameters& params,
                       const ArchitectureSpec& spec, const std::string& path) {
  std::string buf;
  buf.append(kModelMagic, 4);
  buf.push_back(static_cast<char>(kModelVersion));
  buf.push_back(static_cast<char>(spec.kind));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(spec.embedding_dim));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(spec.lstm_hidden_dim));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(spec.image_dense_dim));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(spec.image_input_dim));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(spec.vocab_size));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(spec.max_len));
  detail::visit_params(params, [&buf](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        detail::put_f32_le(buf, static_cast<float>(m(r, c)));
      }
    }
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("save_model: write failed: " + path);
  }
}

struct LoadedModel {
  ArchitectureSpec spec;
  ModelParameters params;
};

inline LoadedModel load_model(const std::string& path) {
  detail::ByteReader reader(detail::slurp_file(path), path);
  char magic[4];
  reader.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a captioning model (bad magic)");
  }
  const std::uint8_t version = reader.read_u8("version");
  if (version != kModelVersion) {
    throw std::runtime_error(path + ": unsupported model version " +
                             std::to_string(version));
  }
  LoadedModel loaded;
  const std::uint8_t kind = reader.read_u8("kind");
  if (kind > 2) {
    throw std::runtime_error(path + ": unknown architecture kind " +
                             std::to_string(kind));
  }
  loaded.spec.kind = static_cast<ArchKind>(kind);
  loaded.spec.embedding_dim = static_cast<int>(reader.read_u32_le("embedding_dim"));
  loaded.spec.lstm_hidden_dim = static_cast<int>(reader.read_u32_le("lstm_hidden_dim"));
  loaded.spec.image_dense_dim = static_cast<int>(reader.read_u32_le("image_dense_dim"));
  loaded.spec.image_input_dim = static_cast<int>(reader.read_u32_le("image_input_dim"));
  loaded.spec.vocab_size = static_cast<int>(reader.read_u32_le("vocab_size"));
  loaded.spec.max_len = static_cast<int>(reader.read_u32_le("max_len"));
  loaded.spec.validate();
  loaded.params = zeros_like(loaded.spec);
  detail::visit_params(loaded.params, [&reader](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = static_cast<double>(reader.read_f32_le("parameter"));
      }
    }
  });
  return loaded;
}

// Scorer adapter over a trained model.
class NeuralScorer : public Scorer {
 public:
  NeuralScorer(ArchitectureSpec spec, ModelParameters params, Vocabulary vocab)
      : spec_(spec), params_(std::move(params)), vocab_(std::move(vocab)) {
    if (vocab_.size() != spec_.vocab_size) {
      throw std::invalid_argument(
          "NeuralScorer: vocabulary size " + std::to_string(vocab_.size()) +
          " does not match model vocab_size " +
          std::to_string(spec_.vocab_size));
    }
  }

  NextTokenDistribution predict_next(
      const ImageEmbedding& embedding,
      const EncodedCaption& prefix) const override {
    return forward(params_, spec_, embedding, prefix);
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  int max_prefix_len() const override { return spec_.max_len; }
  const ArchitectureSpec& spec() const { return spec_; }
  const ModelParameters& params() const { return params_; }

 private:
  ArchitectureSpec spec_;
  ModelParameters params_;
  Vocabulary vocab_;
};

// Loss-history CSV, one row per epoch.
inline void save_loss_history(const LossHistory& history,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_loss_history: cannot open " + path);
  out << "epoch,train_loss,val_loss\n";
  char line[128];
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g\n", i + 1,
                  history.train_loss[i], history.val_loss[i]);
    out << line;
  }
}

// Optional external word-embedding table: one line per token,
// "token v1 ... vE". Rows for unknown tokens are skipped; returns the number
// of vocabulary rows filled.
inline int load_word_embeddings(const std::string& path,
                                const Vocabulary& vocab,
                                Eigen::MatrixXd& embedding) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_word_embeddings: cannot open " + path);
  }
  int filled = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (!vocab.contains(token)) continue;
    const int row = vocab.index_of(token);
    for (Eigen::Index c = 0; c < embedding.cols(); ++c) {
      double v;
      if (!(ls >> v)) {
        throw std::runtime_error(
            "load_word_embeddings: token '" + token + "' has fewer than " +
            std::to_string(embedding.cols()) + " values");
      }
      embedding(row, c) = v;
    }
    ++filled;
  }
  return filled;
}

}  // namespace capforge

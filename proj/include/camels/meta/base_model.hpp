#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "camels/autograd/optim.hpp"
#include "camels/lm/losses.hpp"

namespace camels {

struct QaPair {
  TokenSequence question;
  TokenSequence answer;
};

struct TuneConfig {
  std::size_t epochs = 1;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Adam on conditional_nll, one pair per step, pairs reshuffled every epoch.

inline LmParams qa_tune(LmParams theta, const std::vector<QaPair>& pairs, const TuneConfig& cfg,
                        const EpochCallback& on_epoch = {}) {
  if (pairs.empty()) throw std::invalid_argument("qa_tune: no question-answer pairs");
  if (cfg.lr == 0.0) return theta;
  std::mt19937_64 rng(cfg.seed);
  AdamState st = AdamState::fresh(theta.tensors, AdamConfig{cfg.lr});
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      Tape tape;
      LmParams w = theta.watched(tape);
      Tensor loss = conditional_nll(w, pairs[i].question, pairs[i].answer);
      total += loss.item();
      theta.tensors = adam_step(theta.tensors, backward(loss, w.tensors), st);
    }
    if (on_epoch) on_epoch(ep, total / double(pairs.size()));
  }
  return theta;
}

/// One training example for language-model pretraining: either a document
/// (mean NLL over all tokens) or a question-answer pair (answer NLL only).
struct PretrainItem {
  TokenSequence tokens;
  std::optional<QaPair> qa;
};

/// Adam over a shuffled mixture of documents and QA pairs.
inline LmParams pretrain_lm(LmParams theta, const std::vector<PretrainItem>& items, const TuneConfig& cfg,
                            const EpochCallback& on_epoch = {}) {
  if (items.empty()) throw std::invalid_argument("pretrain_lm: no training items");
  std::mt19937_64 rng(cfg.seed);
  AdamState st = AdamState::fresh(theta.tensors, AdamConfig{cfg.lr});
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      Tape tape;
      LmParams w = theta.watched(tape);
      const auto& it = items[i];
      Tensor loss = it.qa ? conditional_nll(w, it.qa->question, it.qa->answer)
                          : weighted_nll(w, it.tokens, TokenWeights::constant(it.tokens.size(), 1.0));
      total += loss.item();
      theta.tensors = adam_step(theta.tensors, backward(loss, w.tensors), st);
    }
    if (on_epoch) on_epoch(ep, total / double(items.size()));
  }
  return theta;
}

}  // namespace camels

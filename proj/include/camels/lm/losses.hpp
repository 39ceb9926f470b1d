#pragma once

#include <span>
#include <vector>

#include "camels/lm/model.hpp"
#include "camels/weighting/token_weights.hpp"

namespace camels {

namespace detail {

// [BOS] x[0..n-2] predicts x[0..n-1].
inline std::vector<TokenId> document_input(std::span<const TokenId> x) {
  std::vector<TokenId> in;
  in.reserve(x.size());
  in.push_back(Vocabulary::kBos);
  in.insert(in.end(), x.begin(), x.end() - 1);
  return in;
}

inline std::vector<std::size_t> as_indices(std::span<const TokenId> ids) {
  return {ids.begin(), ids.end()};
}

}  // namespace detail

/// Per-position negative log-likelihood of a document, shape [T], T = |x|.
inline Tensor token_nll(const LmParams& params, const TokenSequence& x) {
  if (x.empty()) throw std::invalid_argument("token_nll: empty document");
  auto in = detail::document_input(x.ids);
  Tensor logp = log_softmax(forward_logits(params, in));
  return scale(pick(logp, detail::as_indices(x.ids)), -1.0);
}

/// (1/T) * sum_t a_t * NLL_t. `a` may be recorded on a tape (learned weights).
inline Tensor weighted_nll(const LmParams& params, const TokenSequence& x, const Tensor& a) {
  if (a.dim() != 1 || a.numel() != x.size()) {
    throw std::invalid_argument("weighted_nll: " + std::to_string(a.numel()) + " weights for " +
                                std::to_string(x.size()) + " predicted positions");
  }
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a[i] < 0.0) throw std::invalid_argument("weighted_nll: negative weight at position " + std::to_string(i));
  }
  Tensor nll = token_nll(params, x);
  return scale(sum(mul(a, nll)), 1.0 / static_cast<double>(x.size()));
}

inline Tensor weighted_nll(const LmParams& params, const TokenSequence& x, const TokenWeights& a) {
  a.validate();
  return weighted_nll(params, x, a.tensor());
}

/// Full question-answer sequence: [BOS] q [SEP] y [EOS].
inline std::vector<TokenId> qa_sequence(const TokenSequence& q, const TokenSequence& y) {
  std::vector<TokenId> s;
  s.reserve(q.size() + y.size() + 3);
  s.push_back(Vocabulary::kBos);
  s.insert(s.end(), q.ids.begin(), q.ids.end());
  s.push_back(Vocabulary::kSep);
  s.insert(s.end(), y.ids.begin(), y.ids.end());
  s.push_back(Vocabulary::kEos);
  return s;
}

/// Mean NLL of the answer tokens and the closing EOS given "q SEP".
inline Tensor conditional_nll(const LmParams& params, const TokenSequence& q, const TokenSequence& y) {
  if (y.empty()) throw std::invalid_argument("conditional_nll: empty answer");
  auto seq = qa_sequence(q, y);
  std::vector<TokenId> in(seq.begin(), seq.end() - 1);
  const std::size_t first = q.size() + 1;  // input row holding SEP
  std::vector<std::size_t> rows, targets;
  for (std::size_t r = first; r < in.size(); ++r) {
    rows.push_back(r);
    targets.push_back(seq[r + 1]);
  }
  Tensor logits = project_logits(params, forward_hidden(params, in), rows);
  return scale(mean(pick(log_softmax(logits), targets)), -1.0);
}

/// Log next-token distributions after each nonempty prefix of x, shape [|x|, V].
inline Tensor prefix_distributions(const LmParams& params, const TokenSequence& x) {
  if (x.empty()) throw std::invalid_argument("prefix_distributions: empty input");
  std::vector<TokenId> in;
  in.reserve(x.size() + 1);
  in.push_back(Vocabulary::kBos);
  in.insert(in.end(), x.ids.begin(), x.ids.end());
  Tensor h = forward_hidden(params, in);
  std::vector<std::size_t> rows(x.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i + 1;
  return log_softmax(project_logits(params, h, rows));
}

}  // namespace camels

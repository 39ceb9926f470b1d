#pragma once

#include "camels/lm/losses.hpp"

namespace camels {

/// Argmax continuation of "[BOS] q [SEP]" until EOS or max_len tokens.
/// Ties go to the lowest id. The EOS itself is not returned.
inline TokenSequence greedy_decode(const LmParams& params, const TokenSequence& q, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  std::vector<TokenId> in;
  in.push_back(Vocabulary::kBos);
  in.insert(in.end(), q.ids.begin(), q.ids.end());
  in.push_back(Vocabulary::kSep);
  TokenSequence out;
  const LmParams plain = params.detached();
  for (std::size_t step = 0; step < max_len && in.size() <= params.config.n_ctx; ++step) {
    Tensor h = forward_hidden(plain, in);
    Tensor logits = project_logits(plain, h, {in.size() - 1});
    auto v = logits.values();
    TokenId best = 0;
    for (std::size_t j = 1; j < v.size(); ++j)
      if (v[j] > v[best]) best = static_cast<TokenId>(j);
    if (best == Vocabulary::kEos) break;
    out.ids.push_back(best);
    out.word_index.push_back(out.ids.size() - 1);
    in.push_back(best);
  }
  return out;
}

}  // namespace camels

#pragma once

#include <string>
#include <vector>

#include "camels/data/triple.hpp"
#include "camels/eval/metrics.hpp"
#include "camels/lm/decode.hpp"

namespace camels {

struct QueryScores {
  std::vector<std::string> ids;
  std::vector<std::string> predictions;
  std::vector<double> f1;
  std::vector<int> em;

  double mean_f1() const { return mean_of(f1); }
  double mean_em() const {
    double s = 0.0;
    for (int e : em) s += e;
    return em.empty() ? 0.0 : s / double(em.size());
  }
};

/// Greedy answers to each triple's question, scored against its answer.
inline QueryScores evaluate_queries(const LmParams& theta, const std::vector<DocumentTriple>& triples,
                                    const Vocabulary& vocab, std::size_t max_answer_len = 6) {
  QueryScores s;
  for (const auto& t : triples) {
    TokenSequence q = tokenize(t.question, vocab);
    std::string pred = detokenize(greedy_decode(theta, q, max_answer_len), vocab);
    s.ids.push_back(t.id);
    s.f1.push_back(f1_token_overlap(pred, t.answer));
    s.em.push_back(exact_match(pred, t.answer));
    s.predictions.push_back(std::move(pred));
  }
  return s;
}

}  // namespace camels

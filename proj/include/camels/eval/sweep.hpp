#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <string>
#include <vector>

#include "camels/adapt/stream.hpp"
#include "camels/eval/qa_eval.hpp"
#include "camels/weighting/weight_model.hpp"

namespace camels {

/// Documents to adapt on and the queries scored afterwards.
struct StreamTask {
  std::vector<Document> docs;
  std::vector<DocumentTriple> queries;
};

inline StreamTask make_stream_task(const std::vector<DocumentTriple>& triples, const Vocabulary& vocab) {
  StreamTask t;
  for (const auto& x : triples) t.docs.push_back(make_document(x.id, x.text, x.categories, vocab, x.time));
  t.queries = triples;
  return t;
}

/// FNV-1a over document ids and token ids; equal hashes mean the same stream.
inline std::uint64_t stream_hash(const std::vector<Document>& docs) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& d : docs) {
    for (unsigned char c : d.id) mix(c);
    mix(d.tokens.size());
    for (TokenId id : d.tokens.ids) mix(id);
  }
  return h;
}

struct SweepArm {
  double lr = 0.0;
  double f1 = 0.0;
  bool diverged = false;
  std::string note;
};

struct SweepResult {
  std::vector<SweepArm> arms;  // ascending learning rate
  double selected_lr = 0.0;
  double selected_f1 = 0.0;
};

/// Adapts on the stream once per rate and keeps the best mean F1; ties go to
/// the smaller rate. A halted run scores 0 and is flagged. Arms are
/// independent and run `jobs` at a time.
inline SweepResult lr_sweep(const LmParams& base, const Weighter& weighter, const StreamTask& task,
                            const Vocabulary& vocab, std::vector<double> grid, AdaptConfig cfg, std::size_t jobs = 1) {
  if (grid.empty()) throw std::invalid_argument("lr_sweep: empty learning-rate grid");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  auto arm = [&](double lr) {
    AdaptConfig c = cfg;
    c.adam.lr = lr;
    c.checkpoint_every = std::max<std::size_t>(1, task.docs.size());
    StreamRun run = adapt_stream(base, task.docs, weighter, c);
    SweepArm a{lr, 0.0, run.halted, run.halted ? run.halted_doc + ": " + run.halt_reason : ""};
    if (!run.halted) a.f1 = evaluate_queries(run.params(), task.queries, vocab).mean_f1();
    return a;
  };
  SweepResult r;
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t i = 0; i < grid.size(); i += jobs) {
    std::vector<std::future<SweepArm>> running;
    for (std::size_t j = i; j < std::min(grid.size(), i + jobs); ++j)
      running.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, arm, grid[j]));
    for (auto& f : running) r.arms.push_back(f.get());
  }
  const SweepArm* best = &r.arms.front();
  for (const auto& a : r.arms)
    if (a.f1 > best->f1) best = &a;
  r.selected_lr = best->lr;
  r.selected_f1 = best->f1;
  return r;
}

/// Before/after F1 of one method over several seeded streams.
struct ScoreReport {
  std::vector<double> base_f1;     // per seed
  std::vector<double> adapted_f1;  // per seed
  std::vector<QueryScores> per_seed;
  double mean_base = 0.0, mean_adapted = 0.0;
  double abs_change = 0.0, rel_change = 0.0;
  double se_adapted = std::nan("");  // NaN below two seeds
  double se_change = std::nan("");
  std::vector<std::uint64_t> stream_hashes;
};

inline ScoreReport make_score_report(std::vector<double> base_f1, std::vector<QueryScores> adapted,
                                     std::vector<std::uint64_t> hashes = {}) {
  if (base_f1.size() != adapted.size()) throw std::invalid_argument("score report: seed count mismatch");
  ScoreReport r;
  r.base_f1 = std::move(base_f1);
  r.per_seed = std::move(adapted);
  std::vector<double> change;
  for (std::size_t s = 0; s < r.per_seed.size(); ++s) {
    r.adapted_f1.push_back(r.per_seed[s].mean_f1());
    change.push_back(r.adapted_f1.back() - r.base_f1[s]);
  }
  r.mean_base = mean_of(r.base_f1);
  r.mean_adapted = mean_of(r.adapted_f1);
  r.abs_change = r.mean_adapted - r.mean_base;
  r.rel_change = r.mean_base > 0.0 ? r.abs_change / r.mean_base : std::nan("");
  r.se_adapted = standard_error(r.adapted_f1);
  r.se_change = standard_error(change);
  r.stream_hashes = std::move(hashes);
  return r;
}

/// Adapts the base model on every stream with one weighter and scores it.
inline ScoreReport evaluate_method(const LmParams& base, const Weighter& weighter, const std::vector<StreamTask>& streams,
                                   const Vocabulary& vocab, const AdaptConfig& cfg) {
  std::vector<double> base_f1;
  std::vector<QueryScores> adapted;
  std::vector<std::uint64_t> hashes;
  for (const auto& s : streams) {
    base_f1.push_back(evaluate_queries(base, s.queries, vocab).mean_f1());
    StreamRun run = adapt_stream(base, s.docs, weighter, cfg);
    adapted.push_back(run.halted ? QueryScores{} : evaluate_queries(run.params(), s.queries, vocab));
    if (run.halted) adapted.back().f1.assign(s.queries.size(), 0.0);
    hashes.push_back(stream_hash(s.docs));
  }
  return make_score_report(std::move(base_f1), std::move(adapted), std::move(hashes));
}

inline Weighter learned_weighter(WeightModelParams phi) {
  return [phi = std::move(phi)](const Document& d) { return learned_weights(phi, d.tokens); };
}

using TransferMatrix = std::map<std::pair<std::string, std::string>, ScoreReport>;  // (train, test) -> report

/// Every (train style, test style) pair: adapt with the train style's weight
/// model on the test style's streams. `lr` gives the rate per train style.
inline TransferMatrix transfer_matrix(const LmParams& base, const std::vector<std::string>& styles,
                                      const std::map<std::string, WeightModelParams>& phis,
                                      const std::map<std::string, std::vector<StreamTask>>& streams,
                                      const std::map<std::string, double>& lr, const Vocabulary& vocab,
                                      AdaptConfig cfg) {
  TransferMatrix m;
  for (const auto& tr : styles) {
    for (const auto& te : styles) {
      const std::string cell = "(" + tr + " -> " + te + ")";
      auto p = phis.find(tr);
      if (p == phis.end()) throw std::invalid_argument("transfer_matrix: no weight model trained on " + tr + " for cell " + cell);
      auto s = streams.find(te);
      if (s == streams.end()) throw std::invalid_argument("transfer_matrix: no test streams for " + te + " in cell " + cell);
      auto r = lr.find(tr);
      if (r == lr.end()) throw std::invalid_argument("transfer_matrix: no learning rate for " + tr + " in cell " + cell);
      cfg.adam.lr = r->second;
      m[{tr, te}] = evaluate_method(base, learned_weighter(p->second), s->second, vocab, cfg);
    }
  }
  return m;
}

}  // namespace camels

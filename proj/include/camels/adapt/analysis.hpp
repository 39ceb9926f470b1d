#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "camels/adapt/stream.hpp"
#include "camels/eval/qa_eval.hpp"

namespace camels {

struct CurvePoint {
  std::size_t docs = 0;
  double f1_all = 0.0;
  double f1_unrelated = 0.0;
  QueryScores all;
  QueryScores unrelated;
};

/// F1 on the stream's queries and on unrelated queries at every checkpoint.
inline std::vector<CurvePoint> checkpoint_eval(const StreamRun& run, const std::vector<DocumentTriple>& queries,
                                               const std::vector<DocumentTriple>& unrelated, const Vocabulary& vocab,
                                               std::size_t max_answer_len = 6) {
  std::vector<CurvePoint> out;
  for (const auto& c : run.checkpoints) {
    LmParams p{run.config, c.theta};
    CurvePoint pt;
    pt.docs = c.docs;
    pt.all = evaluate_queries(p, queries, vocab, max_answer_len);
    pt.unrelated = evaluate_queries(p, unrelated, vocab, max_answer_len);
    pt.f1_all = pt.all.mean_f1();
    pt.f1_unrelated = pt.unrelated.mean_f1();
    out.push_back(std::move(pt));
  }
  return out;
}

inline void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "docs,f1_all,f1_unrelated\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.10f,%.10f\n", p.docs, p.f1_all, p.f1_unrelated);
    os << buf;
  }
}

struct LagBin {
  long long lag_start = 0;  // lags in [lag_start, lag_start + M)
  std::size_t count = 0;
  double mean_improvement = 0.0;
  double standard_error = 0.0;  // NaN below two samples
};

struct TimeSinceDoc {
  std::vector<LagBin> observed;    // lag >= 0, ascending
  std::vector<LagBin> unobserved;  // lag < 0, ascending
  std::size_t unlinked = 0;
  std::size_t pairs = 0;
};

/// Per-query F1 change over the unadapted model at each checkpoint, binned by
/// lag = checkpoint docs - (source position + 1). `base` holds the unadapted
/// F1 per query; `source_position` links each query to the stream position
/// of its document (nullopt when unknown).
inline TimeSinceDoc time_since_doc_analysis(const std::vector<CurvePoint>& curve, const std::vector<double>& base,
                                            const std::vector<std::optional<std::size_t>>& source_position,
                                            std::size_t bin_width) {
  if (bin_width == 0) throw std::invalid_argument("time_since_doc_analysis: bin width must be >= 1");
  if (source_position.size() != base.size()) throw std::invalid_argument("time_since_doc_analysis: length mismatch");
  std::map<long long, std::vector<double>> bins;
  TimeSinceDoc out;
  for (std::size_t q = 0; q < base.size(); ++q)
    if (!source_position[q]) ++out.unlinked;
  for (const auto& pt : curve) {
    if (pt.all.f1.size() != base.size()) throw std::invalid_argument("time_since_doc_analysis: curve/query mismatch");
    for (std::size_t q = 0; q < base.size(); ++q) {
      if (!source_position[q]) continue;
      const long long lag = static_cast<long long>(pt.docs) - static_cast<long long>(*source_position[q] + 1);
      const long long w = static_cast<long long>(bin_width);
      const long long b = lag >= 0 ? lag / w : -((-lag + w - 1) / w);
      bins[b * w].push_back(pt.all.f1[q] - base[q]);
      ++out.pairs;
    }
  }
  for (const auto& [start, v] : bins) {
    LagBin lb{start, v.size(), mean_of(v), standard_error(v)};
    (start >= 0 ? out.observed : out.unobserved).push_back(lb);
  }
  return out;
}

inline void write_lag_csv(std::ostream& os, const TimeSinceDoc& t) {
  os << "lag_start,observed,count,mean_improvement,standard_error\n";
  char buf[128];
  for (const auto* part : {&t.unobserved, &t.observed})
    for (const auto& b : *part) {
      std::snprintf(buf, sizeof buf, "%lld,%d,%zu,%.10f,%.10f\n", b.lag_start, part == &t.observed ? 1 : 0, b.count,
                    b.mean_improvement, b.standard_error);
      os << buf;
    }
}

}  // namespace camels

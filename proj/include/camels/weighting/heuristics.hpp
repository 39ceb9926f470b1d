#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "camels/lm/vocab.hpp"
#include "camels/weighting/token_weights.hpp"

namespace camels {

/// A stream document as weighters see it: tokens (with word indices and,
/// when known, category labels) plus the whitespace words they came from.
struct Document {
  std::string id;
  std::int64_t time = 0;
  std::vector<std::string> words;
  TokenSequence tokens;
};

inline Document make_document(std::string id, const std::string& text, const std::vector<std::string>& categories,
                              const Vocabulary& vocab, std::int64_t time = 0) {
  Document d;
  d.id = std::move(id);
  d.time = time;
  d.words = detail::split_whitespace(text);
  d.tokens = tokenize(text, vocab, categories.empty() ? nullptr : &categories);
  return d;
}

inline TokenWeights uniform_weights(const TokenSequence& x) { return TokenWeights::constant(x.size(), 1.0); }

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool is_numeral(const std::string& w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline bool is_capitalized(const std::string& w) {
  return !w.empty() && std::isupper(static_cast<unsigned char>(w[0]));
}

}  // namespace detail

/// TF-IDF over lowercased whitespace words. score(w, d) = tf * (ln((1+N)/(1+df)) + 1)
/// with tf the relative frequency of w in d. The cutoff zeroes every
/// (document, word) score at or below the k-th smallest such score in the
/// corpus, k = floor(cutoff_frac * number of pairs).
class TfIdf {
 public:
  TfIdf(const std::vector<std::vector<std::string>>& corpus, double cutoff_frac = 0.05) : cutoff_frac_(cutoff_frac) {
    if (corpus.empty()) throw std::invalid_argument("tfidf: empty corpus");
    if (cutoff_frac < 0.0 || cutoff_frac >= 1.0) throw std::invalid_argument("tfidf: cutoff_frac outside [0, 1)");
    n_docs_ = corpus.size();
    for (const auto& doc : corpus) {
      std::set<std::string> seen;
      for (const auto& w : doc) seen.insert(detail::lower(w));
      for (const auto& w : seen) ++df_[w];
    }
    std::vector<double> all;
    for (const auto& doc : corpus)
      for (const auto& [w, s] : scores(doc)) all.push_back(s);
    const auto k = static_cast<std::size_t>(std::floor(cutoff_frac * double(all.size())));
    if (k > 0) {
      std::nth_element(all.begin(), all.begin() + static_cast<long>(k - 1), all.end());
      threshold_ = all[k - 1];
      has_threshold_ = true;
    }
  }

  double idf(const std::string& word) const {
    auto it = df_.find(detail::lower(word));
    const double df = it == df_.end() ? 0.0 : double(it->second);
    return std::log((1.0 + double(n_docs_)) / (1.0 + df)) + 1.0;
  }

  std::map<std::string, double> scores(const std::vector<std::string>& words) const {
    std::map<std::string, double> tf;
    for (const auto& w : words) tf[detail::lower(w)] += 1.0;
    for (auto& [w, s] : tf) s = s / double(words.size()) * idf(w);
    return tf;
  }

  /// Per-token weights: each token inherits its word's score, cut words get 0,
  /// and the rest are rescaled to mean 1.
  TokenWeights weights(const Document& d) const {
    auto sc = scores(d.words);
    std::vector<double> w(d.tokens.size(), 0.0);
    double total = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t t = 0; t < w.size(); ++t) {
      double s = sc.at(detail::lower(d.words.at(d.tokens.word_index[t])));
      if (has_threshold_ && s <= threshold_) s = 0.0;
      w[t] = s;
      if (s > 0.0) total += s, ++nonzero;
    }
    if (nonzero > 0)
      for (auto& v : w) v *= double(nonzero) / total;
    return TokenWeights(std::move(w));
  }

  std::size_t document_frequency(const std::string& word) const {
    auto it = df_.find(detail::lower(word));
    return it == df_.end() ? 0 : it->second;
  }
  double threshold() const { return has_threshold_ ? threshold_ : -1.0; }

 private:
  double cutoff_frac_;
  std::size_t n_docs_ = 0;
  std::map<std::string, std::size_t> df_;
  double threshold_ = 0.0;
  bool has_threshold_ = false;
};

/// 1 on tokens of capitalized words, numerals, and ENTITY-labeled tokens; 0 elsewhere.
inline TokenWeights salient_span_weights(const Document& d) {
  std::vector<double> w(d.tokens.size(), 0.0);
  for (std::size_t t = 0; t < w.size(); ++t) {
    const auto& word = d.words.at(d.tokens.word_index[t]);
    const bool labeled = d.tokens.has_categories() && d.tokens.categories[t] == "ENTITY";
    if (detail::is_capitalized(word) || detail::is_numeral(word) || labeled) w[t] = 1.0;
  }
  return TokenWeights(std::move(w));
}

/// Coarse rule-based part-of-speech tag of a word.
inline std::string coarse_pos(const std::string& word) {
  static const std::set<std::string> function_words = {
      "a", "an", "the", "of", "in", "on", "at", "for", "by", "to", "and", "or", "is", "was", "are", "were",
      "near", "now", "with", "from", "that", "this", "what", "where", "who", "how", "does", "do", "did"};
  if (detail::is_numeral(word)) return "NUM";
  if (!word.empty() && std::all_of(word.begin(), word.end(), [](char c) { return detail::is_punct(c); })) return "PUNCT";
  if (detail::is_capitalized(word)) return "PROPN";
  if (function_words.count(detail::lower(word))) return "FUNC";
  return "WORD";
}

/// Per-token tags for the POS ablations: generator labels when `use_labels`
/// and present, the rule tagger otherwise.
inline std::vector<std::string> pos_tags(const Document& d, bool use_labels = false) {
  if (use_labels && d.tokens.has_categories()) return d.tokens.categories;
  std::vector<std::string> tags(d.tokens.size());
  for (std::size_t t = 0; t < tags.size(); ++t) tags[t] = coarse_pos(d.words.at(d.tokens.word_index[t]));
  return tags;
}

/// Learned weights observed on a reference corpus, grouped by tag.
struct WeightReference {
  std::map<std::string, std::vector<double>> by_tag;
  double lo = 0.0, hi = 0.0, global_mean = 0.0;

  void add(const std::vector<std::string>& tags, const TokenWeights& w) {
    if (tags.size() != w.size()) throw std::invalid_argument("WeightReference: tag/weight length mismatch");
    for (std::size_t t = 0; t < w.size(); ++t) by_tag[tags[t]].push_back(w[t]);
  }

  void finalize() {
    double sum = 0.0;
    std::size_t n = 0;
    bool first = true;
    for (const auto& [_, ws] : by_tag)
      for (double v : ws) {
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
        sum += v;
        ++n;
      }
    if (n == 0) throw std::invalid_argument("WeightReference: empty reference corpus");
    global_mean = sum / double(n);
  }

  double mean(const std::string& tag) const {
    auto it = by_tag.find(tag);
    if (it == by_tag.end() || it->second.empty()) return global_mean;
    double s = 0.0;
    for (double v : it->second) s += v;
    return s / double(it->second.size());
  }
};

/// Each token gets the mean reference weight of its tag (global mean if unseen).
inline TokenWeights pos_mean_weights(const WeightReference& ref, const std::vector<std::string>& tags) {
  std::map<std::string, double> cache;
  std::vector<double> w(tags.size());
  for (std::size_t t = 0; t < tags.size(); ++t) {
    auto it = cache.find(tags[t]);
    if (it == cache.end()) it = cache.emplace(tags[t], ref.mean(tags[t])).first;
    w[t] = it->second;
  }
  return TokenWeights(std::move(w));
}

/// Each token's weight drawn uniformly from the reference weights of its tag.
inline TokenWeights pos_resample_weights(const WeightReference& ref, const std::vector<std::string>& tags,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> w(tags.size());
  for (std::size_t t = 0; t < tags.size(); ++t) {
    auto it = ref.by_tag.find(tags[t]);
    if (it == ref.by_tag.end() || it->second.empty()) {
      w[t] = ref.global_mean;
      continue;
    }
    const auto& pool = it->second;
    w[t] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  }
  return TokenWeights(std::move(w));
}

/// Snap each weight to the nearer of the reference extremes; the midpoint goes up.
inline TokenWeights bimodal_round_weights(const WeightReference& ref, const TokenWeights& learned) {
  const double mid = 0.5 * (ref.lo + ref.hi);
  std::vector<double> w(learned.size());
  for (std::size_t t = 0; t < w.size(); ++t) w[t] = learned[t] >= mid ? ref.hi : ref.lo;
  return TokenWeights(std::move(w));
}

struct CategoryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
};

struct WeightStats {
  std::vector<double> edges;  // bins + 1 ascending edges over [min, max]
  std::vector<std::size_t> counts;
  std::map<std::string, CategoryStats> by_category;
  double min = 0.0, max = 0.0;
  double top_mode_mass = 0.0;  // share of total weight on tokens in the upper half of [min, max]
  std::size_t total = 0;
};

inline WeightStats weight_stats(const std::vector<double>& weights, const std::vector<std::string>& categories,
                                std::size_t bins = 20) {
  if (weights.size() != categories.size()) throw std::invalid_argument("weight_stats: length mismatch");
  if (bins == 0) throw std::invalid_argument("weight_stats: bins must be >= 1");
  WeightStats s;
  s.total = weights.size();
  s.counts.assign(bins, 0);
  if (weights.empty()) return s;
  s.min = *std::min_element(weights.begin(), weights.end());
  s.max = *std::max_element(weights.begin(), weights.end());
  const double width = (s.max - s.min) / double(bins);
  for (std::size_t b = 0; b <= bins; ++b) s.edges.push_back(s.min + width * double(b));
  double mass = 0.0, top = 0.0;
  const double mid = 0.5 * (s.min + s.max);
  for (double w : weights) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((w - s.min) / width) : 0;
    s.counts[std::min(b, bins - 1)]++;
    mass += w;
    if (s.max > s.min && w >= mid) top += w;
  }
  s.top_mode_mass = mass > 0.0 ? top / mass : 0.0;
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t i = 0; i < weights.size(); ++i) groups[categories[i]].push_back(weights[i]);
  for (const auto& [c, ws] : groups) {
    CategoryStats cs;
    cs.count = ws.size();
    for (double w : ws) cs.mean += w;
    cs.mean /= double(ws.size());
    for (double w : ws) cs.variance += (w - cs.mean) * (w - cs.mean);
    cs.variance /= double(ws.size());
    s.by_category[c] = cs;
  }
  return s;
}

/// CSV rows (doc_id, position, token, category, weight); header written when asked.
inline void write_weight_csv(std::ostream& os, const Document& d, const Vocabulary& vocab, const TokenWeights& w,
                             bool header = false) {
  if (header) os << "doc_id,position,token,category,weight\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) (c == '"' ? q += "\"\"" : q += c);
    return q + "\"";
  };
  char buf[32];
  for (std::size_t t = 0; t < d.tokens.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%.17g", w[t]);
    os << quote(d.id) << ',' << t << ',' << quote(vocab.token(d.tokens.ids[t])) << ','
       << (d.tokens.has_categories() ? d.tokens.categories[t] : "") << ',' << buf << '\n';
  }
}

}  // namespace camels

#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace camels {

/// Lowercase, drop punctuation, drop the articles a/an/the, collapse whitespace.
inline std::string normalize_answer(const std::string& s) {
  std::string clean;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    clean.push_back(static_cast<char>(std::tolower(u)));
  }
  std::string out;
  std::size_t i = 0;
  while (i < clean.size()) {
    while (i < clean.size() && std::isspace(static_cast<unsigned char>(clean[i]))) ++i;
    std::size_t j = i;
    while (j < clean.size() && !std::isspace(static_cast<unsigned char>(clean[j]))) ++j;
    if (j > i) {
      std::string w = clean.substr(i, j - i);
      if (w != "a" && w != "an" && w != "the") (out.empty() ? out : out += ' ') += w;
    }
    i = j;
  }
  return out;
}

inline std::vector<std::string> answer_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string n = normalize_answer(s), cur;
  for (char c : n) {
    if (c == ' ') out.push_back(std::move(cur)), cur.clear();
    else cur.push_back(c);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Token-multiset F1 after normalization. Both empty scores 1, one empty 0.
inline double f1_token_overlap(const std::string& prediction, const std::string& gold) {
  const auto p = answer_tokens(prediction), g = answer_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) --it->second, ++common;
  }
  // 2PR/(P+R) written as one division so simple fractions come out exact.
  return 2.0 * double(common) / double(p.size() + g.size());
}

inline int exact_match(const std::string& prediction, const std::string& gold) {
  return normalize_answer(prediction) == normalize_answer(gold) ? 1 : 0;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

/// Standard error of the mean with the n-1 variance; NaN below two samples.
inline double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1) / double(v.size()));
}

}  // namespace camels

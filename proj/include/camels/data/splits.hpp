#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "camels/data/triple.hpp"

namespace camels {

struct SplitRatios {
  double qa_train = 0.2;
  double qa_valid = 0.1;
  double train = 0.35;
  double valid = 0.1;
  double test = 0.25;
};

struct DatasetSplits {
  std::vector<DocumentTriple> qa_train, qa_valid, train, valid, test;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> v = {"qa_train", "qa_valid", "train", "valid", "test"};
    return v;
  }
  std::vector<DocumentTriple>& at(std::size_t i) {
    std::vector<DocumentTriple>* parts[] = {&qa_train, &qa_valid, &train, &valid, &test};
    return *parts[i];
  }
  const std::vector<DocumentTriple>& at(std::size_t i) const { return const_cast<DatasetSplits*>(this)->at(i); }
};

/// Grouping key: the entity of the queried fact, so every fact of an entity
/// lands in one split. Triples without fact annotations group by id.
inline std::string split_group(const DocumentTriple& t) {
  if (t.facts.empty()) return "id:" + t.id;
  const auto& f = t.facts.front();
  return f.substr(0, f.find('.'));
}

/// Five-way partition by entity, in the order qa_train, qa_valid, train,
/// valid, test. Temporal splits order entities by earliest document time;
/// otherwise the order is a seeded shuffle. Split sizes follow the ratios
/// exactly when every entity owns a single document.
inline DatasetSplits split_dataset(const std::vector<DocumentTriple>& triples, const SplitRatios& ratios,
                                   bool temporal, std::uint64_t seed) {
  const double parts[] = {ratios.qa_train, ratios.qa_valid, ratios.train, ratios.valid, ratios.test};
  double total = 0.0;
  for (double p : parts) {
    if (!(p > 0.0)) throw std::invalid_argument("split_dataset: every split ratio must be > 0");
    total += p;
  }
  std::vector<std::size_t> bounds;
  double cum = 0.0;
  for (double p : parts) {
    cum += p / total;
    bounds.push_back(static_cast<std::size_t>(std::lround(cum * double(triples.size()))));
  }
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t lo = k ? bounds[k - 1] : 0;
    if (bounds[k] <= lo) {
      std::size_t need = 0;
      for (double p : parts) need = std::max(need, static_cast<std::size_t>(std::ceil(total / p)));
      throw std::invalid_argument("split_dataset: " + std::to_string(triples.size()) + " triples leave split " +
                                  DatasetSplits::names()[k] + " empty; at least " + std::to_string(need) +
                                  " are required for these ratios");
    }
  }

  std::map<std::string, std::vector<std::size_t>> groups;
  std::map<std::string, std::int64_t> first_time;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto key = split_group(triples[i]);
    groups[key].push_back(i);
    auto [it, fresh] = first_time.emplace(key, triples[i].time);
    if (!fresh) it->second = std::min(it->second, triples[i].time);
  }
  std::vector<std::string> order;
  for (const auto& [k, _] : groups) order.push_back(k);
  if (temporal) {
    std::stable_sort(order.begin(), order.end(),
                     [&](const auto& a, const auto& b) { return first_time[a] < first_time[b]; });
  } else {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  DatasetSplits out;
  std::size_t assigned = 0, k = 0;
  for (const auto& key : order) {
    while (k < 4 && assigned >= bounds[k]) ++k;
    for (std::size_t i : groups[key]) out.at(k).push_back(triples[i]);
    assigned += groups[key].size();
  }
  for (std::size_t s = 0; s < 5; ++s) {
    auto& part = out.at(s);
    std::stable_sort(part.begin(), part.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  }
  return out;
}

/// Throws if two splits share a document id or a fact.
inline void check_disjoint(const DatasetSplits& s) {
  std::map<std::string, std::size_t> id_owner, fact_owner;
  for (std::size_t k = 0; k < 5; ++k) {
    for (const auto& t : s.at(k)) {
      auto [it, fresh] = id_owner.emplace(t.id, k);
      if (!fresh && it->second != k) throw std::logic_error("document " + t.id + " appears in two splits");
      for (const auto& f : t.facts) {
        auto [jt, ffresh] = fact_owner.emplace(f, k);
        if (!ffresh && jt->second != k) {
          throw std::logic_error("fact " + f + " shared by splits " + DatasetSplits::names()[jt->second] + " and " +
                                 DatasetSplits::names()[k]);
        }
      }
    }
  }
}

}  // namespace camels

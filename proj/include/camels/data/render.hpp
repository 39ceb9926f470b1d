#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "camels/data/triple.hpp"
#include "camels/data/world.hpp"

namespace camels {

/// Document style: rough token budget and number of stated facts.
struct StyleSpec {
  std::string name;
  std::size_t target_tokens = 120;
  std::size_t n_facts = 3;
  double mention_rate = 0.0;  // share of filler sentences that name the entity
};

inline StyleSpec style_spec(const std::string& name) {
  if (name == "A") return {"A", 120, 3};
  if (name == "B") return {"B", 60, 2};
  if (name == "C") return {"C", 40, 1};
  throw std::invalid_argument("unknown document style \"" + name + "\" (expected A, B or C)");
}

inline const std::vector<std::string>& style_names() {
  static const std::vector<std::string> v = {"A", "B", "C"};
  return v;
}

namespace detail {

struct Words {
  std::vector<std::string> w, c;
  void push(const std::string& word, const std::string& cat) {
    w.push_back(word);
    c.push_back(cat);
  }
  void append(const Words& o) {
    w.insert(w.end(), o.w.begin(), o.w.end());
    c.insert(c.end(), o.c.begin(), o.c.end());
  }
  std::string text() const {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) (i ? s += ' ' : s) += w[i];
    return s;
  }
};

template <class T>
const T& choose(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

// A sentence with no fact content. Capitalized distractor names and numbers
// appear here too so surface cues alone do not identify facts.
inline Words filler_sentence(const SyntheticWorld& world, std::mt19937_64& rng) {
  using namespace words;
  const std::string& F = category::kFiller;
  Words s;
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: {
      const auto& op = choose(filler_openers(), rng);
      s.push(op, F);
      if (op != "The") s.push("the", F);
      s.push(choose(filler_adjectives(), rng), F);
      s.push(choose(filler_nouns(), rng), F);
      s.push(choose(filler_verbs(), rng), F);
      s.push("the", F);
      s.push(choose(filler_nouns(), rng), F);
      break;
    }
    case 1:
      s.push(choose(world.distractors, rng), F);
      s.push(choose(filler_verbs(), rng), F);
      s.push("the", F);
      s.push(choose(filler_nouns(), rng), F);
      s.push("near", F);
      s.push("the", F);
      s.push(choose(filler_nouns(), rng), F);
      break;
    case 2:
      s.push(choose(filler_openers(), rng), F);
      s.push(choose(world.filler_numbers, rng), category::kNum);
      s.push("people", F);
      s.push(choose(filler_verbs(), rng), F);
      s.push("the", F);
      s.push(choose(filler_adjectives(), rng), F);
      s.push(choose(filler_nouns(), rng), F);
      break;
    default:
      s.push("The", F);
      s.push(choose(filler_nouns(), rng), F);
      s.push("was", F);
      s.push(choose(filler_adjectives(), rng), F);
      s.push("and", F);
      s.push(choose(filler_adjectives(), rng), F);
      break;
  }
  s.push(".", F);
  return s;
}

// A fact-free sentence about the document's entity.
inline Words mention_sentence(const std::string& entity, std::mt19937_64& rng) {
  using namespace words;
  const std::string& F = category::kFiller;
  Words s;
  for (const auto& part : split_whitespace(entity)) s.push(part, category::kEntity);
  s.push(choose(filler_verbs(), rng), F);
  s.push("the", F);
  s.push(choose(filler_adjectives(), rng), F);
  s.push(choose(filler_nouns(), rng), F);
  s.push(".", F);
  return s;
}

// Substitutes "{E}" and "{V}" in a template, labeling each word.
inline Words fill_template(const std::string& tmpl, const std::string& entity, const std::string& value,
                           std::size_t* value_word = nullptr) {
  Words s;
  for (const auto& tok : split_whitespace(tmpl)) {
    if (tok == "{E}") {
      for (const auto& part : split_whitespace(entity)) s.push(part, category::kEntity);
    } else if (tok == "{V}") {
      if (value_word) *value_word = s.w.size();
      for (const auto& part : split_whitespace(value)) s.push(part, category::kValue);
    } else {
      s.push(tok, category::kRelation);
    }
  }
  return s;
}

inline std::string fill_question(const std::string& tmpl, const std::string& entity) {
  std::string q = tmpl;
  q.replace(q.find("{E}"), 3, entity);
  return q;
}

}  // namespace detail

/// Renders `n` documents about entities drawn from `entity_ids` (cycled in a
/// seeded order). Each document states `n_facts` facts about one entity among
/// filler sentences and asks about one of them. The answer is the fact's
/// value at the document's stream time and occurs verbatim in the text.
inline std::vector<DocumentTriple> render_triples(const SyntheticWorld& world, const StyleSpec& style, std::size_t n,
                                                  std::uint64_t seed, std::vector<std::size_t> entity_ids = {}) {
  if (n == 0) throw std::invalid_argument("render_triples: n must be >= 1");
  if (style.n_facts == 0 || style.n_facts > world.relations.size()) {
    throw std::invalid_argument("render_triples: style " + style.name + " asks for " + std::to_string(style.n_facts) +
                                " facts per document");
  }
  if (entity_ids.empty()) {
    entity_ids.resize(world.entities.size());
    std::iota(entity_ids.begin(), entity_ids.end(), 0);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = entity_ids;
  std::shuffle(order.begin(), order.end(), rng);

  const double filler_len = 7.4;  // mean words per filler sentence
  std::vector<DocumentTriple> out;
  out.reserve(n);
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t e = order[d % order.size()];
    const Entity& ent = world.entities[e];
    const std::int64_t time =
        ent.time + std::uniform_int_distribution<std::int64_t>(0, std::max<std::int64_t>(0, world.spec.time_slot - 1))(rng);

    std::vector<std::size_t> rels(world.relations.size());
    std::iota(rels.begin(), rels.end(), 0);
    std::shuffle(rels.begin(), rels.end(), rng);
    rels.resize(style.n_facts);
    const std::size_t asked = std::uniform_int_distribution<std::size_t>(0, rels.size() - 1)(rng);

    std::vector<detail::Words> facts;
    std::vector<std::size_t> value_pos;
    std::size_t fact_words = 0;
    for (std::size_t r : rels) {
      std::size_t vp = 0;
      facts.push_back(detail::fill_template(world.relations[r].statement, ent.name(), world.value_at(e, r, time), &vp));
      value_pos.push_back(vp);
      fact_words += facts.back().w.size();
    }
    const double budget = std::max(0.0, double(style.target_tokens) - double(fact_words));
    const auto mean_sent = static_cast<int>(std::lround(budget / filler_len));
    const int n_filler = std::max(0, mean_sent + std::uniform_int_distribution<int>(-1, 1)(rng));

    // Sentence order: facts at random slots among the filler.
    std::vector<int> slots(static_cast<std::size_t>(n_filler) + facts.size(), -1);
    for (std::size_t f = 0; f < facts.size(); ++f) slots[f] = static_cast<int>(f);
    std::shuffle(slots.begin(), slots.end(), rng);

    detail::Words doc;
    std::size_t answer_word = 0;
    for (int s : slots) {
      if (s < 0) {
        if (style.mention_rate > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < style.mention_rate)
          doc.append(detail::mention_sentence(ent.name(), rng));
        else
          doc.append(detail::filler_sentence(world, rng));
      } else {
        if (static_cast<std::size_t>(s) == asked) answer_word = doc.w.size() + value_pos[asked];
        doc.append(facts[static_cast<std::size_t>(s)]);
      }
    }

    const std::size_t r = rels[asked];
    DocumentTriple t;
    t.id = style.name + "-" + std::to_string(seed) + "-" + std::to_string(d);
    t.time = time;
    t.text = doc.text();
    t.categories = std::move(doc.c);
    t.question = detail::fill_question(world.relations[r].question, ent.name());
    t.answer = world.value_at(e, r, time);
    t.answer_span = std::make_pair(answer_word, answer_word + detail::split_whitespace(t.answer).size());
    t.style = style.name;
    t.facts.push_back(SyntheticWorld::fact_key(e, r));
    for (std::size_t k = 0; k < rels.size(); ++k)
      if (k != asked) t.facts.push_back(SyntheticWorld::fact_key(e, rels[k]));
    out.push_back(std::move(t));
  }
  return out;
}

/// Filler-only documents: text whose predictions adaptation should leave alone.
inline std::vector<DocumentTriple> make_locality_corpus(const SyntheticWorld& world, std::size_t n, std::uint64_t seed,
                                                        std::size_t target_tokens = 48) {
  std::mt19937_64 rng(seed);
  std::vector<DocumentTriple> out;
  for (std::size_t i = 0; i < n; ++i) {
    detail::Words doc;
    while (doc.w.size() + 4 < target_tokens) doc.append(detail::filler_sentence(world, rng));
    DocumentTriple t;
    t.id = "loc-" + std::to_string(seed) + "-" + std::to_string(i);
    t.text = doc.text();
    t.categories = std::move(doc.c);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace camels

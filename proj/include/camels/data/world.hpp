#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace camels {

struct WorldSpec {
  std::size_t n_entities = 3000;
  std::size_t cities = 40;
  std::size_t companies = 30;
  std::size_t occupations = 20;  // capped by the built-in word lists
  std::size_t items = 20;
  std::size_t ages = 70;         // ages 20, 21, ... up to 89
  std::size_t distractor_names = 40;
  std::size_t filler_numbers = 40;
  double drift_fraction = 0.1;
  std::int64_t time_slot = 10;  // stream-time width owned by each entity
  std::uint64_t seed = 1;
};

/// A relation renders as `statement` / `question` with "{E}" replaced by the
/// entity name and "{V}" by the value.
struct Relation {
  std::string name;
  std::string pool;  // value pool key
  std::string statement;
  std::string question;
};

struct Entity {
  std::string first;
  std::string last;
  std::int64_t time = 0;  // start of the entity's time slot
  std::string name() const { return first + " " + last; }
};

/// Value of one (entity, relation) fact, possibly replaced at `change_time`.
struct FactValue {
  std::string value;
  std::string later_value;  // empty when the fact never changes
  std::int64_t change_time = 0;

  bool drifts() const { return !later_value.empty(); }
  const std::string& at(std::int64_t t) const { return drifts() && t >= change_time ? later_value : value; }
};

struct SyntheticWorld {
  WorldSpec spec;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::vector<std::vector<FactValue>> facts;  // [entity][relation]
  std::vector<std::string> cities, companies, occupations, items, ages;
  std::vector<std::string> distractors;
  std::vector<std::string> filler_numbers;

  const std::vector<std::string>& pool(const std::string& key) const {
    if (key == "city") return cities;
    if (key == "company") return companies;
    if (key == "occupation") return occupations;
    if (key == "item") return items;
    if (key == "age") return ages;
    throw std::out_of_range("unknown value pool " + key);
  }

  const std::string& value_at(std::size_t e, std::size_t r, std::int64_t t) const { return facts.at(e).at(r).at(t); }

  static std::string fact_key(std::size_t e, std::size_t r) {
    return "e" + std::to_string(e) + ".r" + std::to_string(r);
  }
};

namespace words {

inline const std::vector<std::string>& first_names() {
  static const std::vector<std::string> v = {
      "Ada", "Bruno", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas",
      "Kira", "Lars", "Mara", "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Sven", "Tara",
      "Umar", "Vera", "Wanda", "Xavier", "Yara", "Zeno"};
  return v;
}

inline const std::vector<std::string>& occupations() {
  static const std::vector<std::string> v = {
      "baker", "pilot", "surgeon", "plumber", "teacher", "lawyer", "sculptor", "chemist", "farmer", "tailor",
      "jeweler", "welder", "florist", "librarian", "architect", "butcher", "dentist", "carpenter", "painter",
      "nurse", "geologist", "brewer", "locksmith", "pharmacist", "sailor", "cartographer", "potter",
      "violinist", "astronomer", "beekeeper"};
  return v;
}

inline const std::vector<std::string>& items() {
  static const std::vector<std::string> v = {
      "bicycle", "telescope", "piano", "canoe", "motorcycle", "typewriter", "harp", "tractor", "parrot",
      "microscope", "sailboat", "accordion", "greenhouse", "kayak", "trumpet", "camera", "violin",
      "lantern", "compass", "hammock", "tortoise", "glider", "sundial", "banjo", "chessboard", "kite",
      "aquarium", "saxophone", "snowmobile", "caravan"};
  return v;
}

// Filler vocabulary; disjoint from every value pool above.
inline const std::vector<std::string>& filler_nouns() {
  static const std::vector<std::string> v = {
      "river", "market", "garden", "bridge", "window", "storm", "meeting", "festival", "harbor", "forest",
      "station", "museum", "road", "season", "crowd", "council", "village", "tower", "valley", "school",
      "report", "letter", "train", "hill", "field", "winter", "summer", "plan", "street", "company"};
  return v;
}

inline const std::vector<std::string>& filler_adjectives() {
  static const std::vector<std::string> v = {
      "ancient", "quiet", "busy", "large", "small", "cold", "bright", "early", "late", "long",
      "new", "local", "narrow", "green", "heavy", "open", "calm", "famous", "distant", "rainy"};
  return v;
}

inline const std::vector<std::string>& filler_verbs() {
  static const std::vector<std::string> v = {
      "crossed", "opened", "closed", "followed", "reached", "passed", "visited", "left", "joined", "watched",
      "filled", "covered", "moved", "changed", "described", "expected", "reported", "noticed", "delayed",
      "supported"};
  return v;
}

inline const std::vector<std::string>& filler_openers() {
  static const std::vector<std::string> v = {"The", "Later", "Meanwhile", "Yesterday", "Often", "Recently",
                                             "Still", "Again"};
  return v;
}

// Syllables for pseudo-words (surnames, cities, companies, distractor names).
inline std::string pseudo_word(std::mt19937_64& rng, std::size_t syllables) {
  static const char* cons[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* vow[] = {"a", "e", "i", "o", "u"};
  std::uniform_int_distribution<int> c(0, 13), v(0, 4);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += cons[c(rng)];
    w += vow[v(rng)];
  }
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

}  // namespace words

namespace detail {

inline std::vector<std::string> unique_pseudo_words(std::mt19937_64& rng, std::size_t n, std::size_t syllables,
                                                    std::set<std::string>& used, const std::string& what) {
  double space = 1.0;
  for (std::size_t i = 0; i < syllables; ++i) space *= 70.0;
  if (static_cast<double>(n) > 0.5 * space) {
    throw std::length_error("generate_world: " + std::to_string(n) + " " + what +
                            " exceed the pseudo-word inventory of " + std::to_string(static_cast<long long>(space)));
  }
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = words::pseudo_word(rng, syllables);
    if (used.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace detail

inline std::vector<Relation> default_relations() {
  return {
      {"born_in", "city", "{E} was born in {V} .", "{E} was born in"},
      {"lives_in", "city", "{E} now lives in {V} .", "{E} now lives in"},
      {"works_for", "company", "{E} works for {V} .", "{E} works for"},
      {"occupation", "occupation", "{E} is a {V} by trade .", "{E} is a"},
      {"owns", "item", "{E} owns a {V} .", "{E} owns a"},
      {"age", "age", "{E} is {V} years old .", "{E} is"},
  };
}

/// Deterministic per spec.seed. Surnames are three-syllable pseudo-words,
/// value names two-syllable with a pool-specific ending.
inline SyntheticWorld generate_world(const WorldSpec& spec) {
  if (spec.n_entities == 0 || spec.cities == 0 || spec.companies == 0 || spec.occupations == 0 || spec.items == 0 ||
      spec.ages == 0) {
    throw std::invalid_argument("generate_world: sizes must be >= 1");
  }
  if (spec.drift_fraction < 0.0 || spec.drift_fraction > 1.0) {
    throw std::invalid_argument("generate_world: drift_fraction outside [0, 1]");
  }
  std::mt19937_64 rng(spec.seed);
  SyntheticWorld w;
  w.spec = spec;
  w.relations = default_relations();
  std::set<std::string> used;
  for (const auto* list : {&words::first_names(), &words::filler_openers()}) used.insert(list->begin(), list->end());

  auto surnames = detail::unique_pseudo_words(rng, spec.n_entities, 3, used, "entities");
  for (auto& c : detail::unique_pseudo_words(rng, spec.cities, 2, used, "cities")) w.cities.push_back(c + "ton");
  for (auto& c : detail::unique_pseudo_words(rng, spec.companies, 2, used, "companies")) w.companies.push_back(c + "corp");
  w.distractors = detail::unique_pseudo_words(rng, spec.distractor_names, 2, used, "distractor names");
  auto take = [](const std::vector<std::string>& v, std::size_t n) {
    return std::vector<std::string>(v.begin(), v.begin() + static_cast<long>(std::min(n, v.size())));
  };
  w.occupations = take(words::occupations(), spec.occupations);
  w.items = take(words::items(), spec.items);
  for (int a = 20; a < 20 + static_cast<int>(std::min<std::size_t>(spec.ages, 70)); ++a) w.ages.push_back(std::to_string(a));
  {
    std::vector<int> nums(900);
    for (int i = 0; i < 900; ++i) nums[i] = 100 + i;
    std::shuffle(nums.begin(), nums.end(), rng);
    for (std::size_t i = 0; i < std::min<std::size_t>(spec.filler_numbers, nums.size()); ++i)
      w.filler_numbers.push_back(std::to_string(nums[i]));
  }

  const auto& firsts = words::first_names();
  std::uniform_int_distribution<std::size_t> pick_first(0, firsts.size() - 1);
  for (std::size_t e = 0; e < spec.n_entities; ++e) {
    w.entities.push_back({firsts[pick_first(rng)], surnames[e], static_cast<std::int64_t>(e) * spec.time_slot});
    std::vector<FactValue> row;
    for (const auto& rel : w.relations) {
      const auto& pool = w.pool(rel.pool);
      row.push_back({pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)], "", 0});
    }
    w.facts.push_back(std::move(row));
  }

  // Exactly round(drift_fraction * facts) facts change value inside their slot.
  const std::size_t n_rel = w.relations.size(), n_facts = spec.n_entities * n_rel;
  std::vector<std::size_t> ids(n_facts);
  for (std::size_t i = 0; i < n_facts; ++i) ids[i] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(std::llround(spec.drift_fraction * double(n_facts))));
  std::sort(ids.begin(), ids.end());
  std::uniform_int_distribution<std::int64_t> change(1, std::max<std::int64_t>(1, spec.time_slot - 1));
  for (std::size_t id : ids) {
    const std::size_t e = id / n_rel, r = id % n_rel;
    FactValue& f = w.facts[e][r];
    const auto& pool = w.pool(w.relations[r].pool);
    if (pool.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pv(0, pool.size() - 1);
    do f.later_value = pool[pv(rng)];
    while (f.later_value == f.value);
    f.change_time = w.entities[e].time + change(rng);
  }
  return w;
}

}  // namespace camels

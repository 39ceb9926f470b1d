#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camels/lm/vocab.hpp"

namespace camels {

/// One document with the query it answers. `categories` labels each
/// whitespace-separated word of `text`; `answer_span` is a word range
/// [start, end) when the answer occurs verbatim.
struct DocumentTriple {
  std::string id;
  std::int64_t time = 0;
  std::string text;
  std::vector<std::string> categories;
  std::string question;
  std::string answer;
  std::optional<std::pair<std::size_t, std::size_t>> answer_span;
  std::string style;               // optional
  std::vector<std::string> facts;  // optional; the queried fact comes first

  bool operator==(const DocumentTriple&) const = default;
};

namespace category {
inline const std::string kEntity = "ENTITY";
inline const std::string kRelation = "RELATION";
inline const std::string kValue = "VALUE";
inline const std::string kFiller = "FILLER";
inline const std::string kNum = "NUM";
}  // namespace category

inline TokenSequence document_tokens(const DocumentTriple& t, const Vocabulary& vocab) {
  return tokenize(t.text, vocab, t.categories.empty() ? nullptr : &t.categories);
}

inline nlohmann::json to_json(const DocumentTriple& t) {
  nlohmann::json j = {{"id", t.id}, {"time", t.time},         {"text", t.text},
                      {"question", t.question}, {"answer", t.answer}, {"categories", t.categories}};
  if (t.answer_span) j["answer_span"] = {t.answer_span->first, t.answer_span->second};
  if (!t.style.empty()) j["style"] = t.style;
  if (!t.facts.empty()) j["facts"] = t.facts;
  return j;
}

inline DocumentTriple triple_from_json(const nlohmann::json& j) {
  for (const char* key : {"id", "time", "text", "question", "answer", "categories"}) {
    if (!j.contains(key)) throw std::runtime_error(std::string("missing required field \"") + key + "\"");
  }
  DocumentTriple t;
  t.id = j.at("id").get<std::string>();
  t.time = j.at("time").get<std::int64_t>();
  t.text = j.at("text").get<std::string>();
  t.question = j.at("question").get<std::string>();
  t.answer = j.at("answer").get<std::string>();
  t.categories = j.at("categories").get<std::vector<std::string>>();
  if (j.contains("answer_span")) {
    auto s = j.at("answer_span").get<std::vector<std::size_t>>();
    if (s.size() != 2 || s[0] > s[1]) throw std::runtime_error("answer_span must be [start, end]");
    t.answer_span = std::make_pair(s[0], s[1]);
  }
  if (j.contains("style")) t.style = j.at("style").get<std::string>();
  if (j.contains("facts")) t.facts = j.at("facts").get<std::vector<std::string>>();
  const auto n_words = detail::split_whitespace(t.text).size();
  if (!t.categories.empty() && t.categories.size() != n_words) {
    throw std::runtime_error("categories has " + std::to_string(t.categories.size()) + " labels for " +
                             std::to_string(n_words) + " words");
  }
  return t;
}

inline void save_jsonl(const std::vector<DocumentTriple>& triples, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("save_jsonl: cannot write " + path.string());
  for (const auto& t : triples) os << to_json(t).dump() << '\n';
}

inline std::vector<DocumentTriple> load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_jsonl: cannot open " + path.string());
  std::vector<DocumentTriple> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(triple_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace camels

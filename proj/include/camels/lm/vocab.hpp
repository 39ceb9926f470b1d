#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace camels {

using TokenId = std::uint32_t;

/// Dense token inventory. Ids 0..4 are reserved, in this order.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kSep = 4;
  static constexpr std::size_t kReserved = 5;

  Vocabulary() {
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"}) add(t);
  }

  TokenId add(std::string_view token) {
    if (auto id = find(token)) return *id;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(std::string_view token) const { return find(token).value_or(kUnk); }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  static bool is_reserved(TokenId id) noexcept { return id < kReserved; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("vocabulary: cannot write " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("vocabulary: cannot open " + path.string());
    Vocabulary v;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      if (n < kReserved) {
        if (line != v.tokens_[n]) {
          throw std::runtime_error("vocabulary: line " + std::to_string(n + 1) +
                                   " must be reserved token " + v.tokens_[n]);
        }
      } else {
        if (v.contains(line)) {
          throw std::runtime_error("vocabulary: duplicate token at line " + std::to_string(n + 1));
        }
        v.add(line);
      }
      ++n;
    }
    return v;
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Token ids with optional per-token annotations.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::string> categories;   // empty, or one label per token
  std::vector<std::size_t> word_index;  // whitespace word each token came from

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  bool has_categories() const noexcept { return !categories.empty(); }
};

namespace detail {

inline bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

// Punctuation characters become standalone pieces.
inline std::vector<std::string> split_pieces(const std::string& word) {
  std::vector<std::string> pieces;
  std::string cur;
  for (char c : word) {
    if (is_punct(c)) {
      if (!cur.empty()) pieces.push_back(std::move(cur)), cur.clear();
      pieces.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) pieces.push_back(std::move(cur));
  return pieces;
}

// Greedy longest-match over "##"-prefixed continuation pieces.
inline std::optional<std::vector<TokenId>> subword_split(const std::string& piece, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  std::size_t start = 0;
  while (start < piece.size()) {
    std::optional<TokenId> found;
    std::size_t end = piece.size();
    for (; end > start; --end) {
      std::string cand = piece.substr(start, end - start);
      if (start > 0) cand = "##" + cand;
      if ((found = vocab.find(cand))) break;
    }
    if (!found) return std::nullopt;
    out.push_back(*found);
    start = end;
  }
  return out;
}

}  // namespace detail

/// Whitespace plus punctuation segmentation with a greedy subword fallback.
/// Unknown pieces map to a single UNK. `word_categories`, when given, labels
/// each whitespace word and is copied to every token of that word.
inline TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                              const std::vector<std::string>* word_categories = nullptr) {
  TokenSequence seq;
  auto words = detail::split_whitespace(text);
  if (word_categories && word_categories->size() != words.size()) {
    throw std::invalid_argument("tokenize: " + std::to_string(word_categories->size()) +
                                " categories for " + std::to_string(words.size()) + " words");
  }
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (const auto& piece : detail::split_pieces(words[w])) {
      std::vector<TokenId> ids;
      if (auto id = vocab.find(piece)) {
        ids.push_back(*id);
      } else if (auto sub = detail::subword_split(piece, vocab)) {
        ids = std::move(*sub);
      } else {
        ids.push_back(Vocabulary::kUnk);
      }
      for (TokenId id : ids) {
        seq.ids.push_back(id);
        seq.word_index.push_back(w);
        if (word_categories) seq.categories.push_back((*word_categories)[w]);
      }
    }
  }
  return seq;
}

/// Tokens of one word are joined directly; words are separated by a space.
inline std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    std::string_view tok = vocab.token(seq.ids[i]);
    const bool same_word = i > 0 && !seq.word_index.empty() && seq.word_index[i] == seq.word_index[i - 1];
    if (i > 0 && !same_word) out.push_back(' ');
    if (same_word && tok.starts_with("##")) tok.remove_prefix(2);
    out.append(tok);
  }
  return out;
}

/// Words of `text` after splitting off punctuation; the inventory a
/// vocabulary needs to cover it without UNKs.
inline std::vector<std::string> vocabulary_pieces(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& w : detail::split_whitespace(text))
    for (auto& p : detail::split_pieces(w)) out.push_back(std::move(p));
  return out;
}

}  // namespace camels

#pragma once

#include <filesystem>
#include <map>
#include <numeric>

#include "camels/data/render.hpp"
#include "camels/data/splits.hpp"

namespace camels {

struct DataSpec {
  WorldSpec world;
  std::size_t docs_per_style = 1000;
  SplitRatios ratios;
  std::size_t locality_docs = 200;  // each of the training and held-out locality sets
  std::string temporal_style = "C";
  double mention_rate = 0.0;
  std::uint64_t seed = 1;
};

/// Everything a pipeline run draws from: per-style splits over disjoint
/// entity blocks, two locality sets, and the covering vocabulary.
struct Corpus {
  std::map<std::string, DatasetSplits> styles;
  std::vector<DocumentTriple> locality_train;
  std::vector<DocumentTriple> locality_eval;
  Vocabulary vocab;
};

inline Vocabulary build_vocabulary(const Corpus& c) {
  Vocabulary v;
  auto add = [&](const std::string& text) {
    for (const auto& p : vocabulary_pieces(text)) v.add(p);
  };
  for (const auto& [_, s] : c.styles)
    for (std::size_t k = 0; k < 5; ++k)
      for (const auto& t : s.at(k)) {
        add(t.text);
        add(t.question);
        add(t.answer);
      }
  for (const auto* loc : {&c.locality_train, &c.locality_eval})
    for (const auto& t : *loc) add(t.text);
  return v;
}

inline Corpus build_corpus(const DataSpec& spec) {
  const auto& styles = style_names();
  const std::size_t need = spec.docs_per_style * styles.size();
  if (spec.world.n_entities < need) {
    throw std::invalid_argument("build_corpus: " + std::to_string(spec.docs_per_style) + " documents per style need " +
                                std::to_string(need) + " entities; world has " +
                                std::to_string(spec.world.n_entities));
  }
  WorldSpec ws = spec.world;
  ws.seed = spec.seed * 1000003ULL + ws.seed;
  SyntheticWorld world = generate_world(ws);
  Corpus c;
  for (std::size_t s = 0; s < styles.size(); ++s) {
    std::vector<std::size_t> block(spec.docs_per_style);
    std::iota(block.begin(), block.end(), s * spec.docs_per_style);
    StyleSpec st = style_spec(styles[s]);
    st.mention_rate = spec.mention_rate;
    auto triples = render_triples(world, st, spec.docs_per_style, spec.seed + 17 * (s + 1), block);
    c.styles[styles[s]] = split_dataset(triples, spec.ratios, styles[s] == spec.temporal_style, spec.seed + 31 * (s + 1));
  }
  c.locality_train = make_locality_corpus(world, spec.locality_docs, spec.seed + 101);
  c.locality_eval = make_locality_corpus(world, spec.locality_docs, spec.seed + 202);
  for (auto& t : c.locality_eval) t.id = "loc-eval-" + t.id.substr(4);
  c.vocab = build_vocabulary(c);
  return c;
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [style, s] : c.styles)
    for (std::size_t k = 0; k < 5; ++k) save_jsonl(s.at(k), dir / (style + "_" + DatasetSplits::names()[k] + ".jsonl"));
  save_jsonl(c.locality_train, dir / "locality_train.jsonl");
  save_jsonl(c.locality_eval, dir / "locality_eval.jsonl");
  c.vocab.save(dir / "vocab.txt");
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "vocab.txt")) {
    throw std::runtime_error("dataset directory " + dir.string() + " has no vocab.txt");
  }
  Corpus c;
  for (const auto& style : style_names()) {
    if (!std::filesystem::exists(dir / (style + "_train.jsonl"))) continue;
    DatasetSplits s;
    for (std::size_t k = 0; k < 5; ++k) s.at(k) = load_jsonl(dir / (style + "_" + DatasetSplits::names()[k] + ".jsonl"));
    c.styles[style] = std::move(s);
  }
  c.locality_train = load_jsonl(dir / "locality_train.jsonl");
  c.locality_eval = load_jsonl(dir / "locality_eval.jsonl");
  c.vocab = Vocabulary::load(dir / "vocab.txt");
  return c;
}

}  // namespace camels

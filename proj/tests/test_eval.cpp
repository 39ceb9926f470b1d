#include <gtest/gtest.h>

#include <cmath>

#include "camels/eval/sweep.hpp"
#include "support/f1_table.hpp"
#include "support/tiny_lm.hpp"

using namespace camels;
using camels::testing::tiny_config;
using camels::testing::vocab_of;

TEST(F1, HandTable) {
  ASSERT_EQ(camels::testing::f1_table().size(), 20u);
  for (const auto& c : camels::testing::f1_table())
    EXPECT_EQ(f1_token_overlap(c.prediction, c.gold), double(c.num) / double(c.den)) << c.prediction << " | " << c.gold;
}

TEST(F1, Symmetric) {
  for (const auto& c : camels::testing::f1_table())
    EXPECT_EQ(f1_token_overlap(c.prediction, c.gold), f1_token_overlap(c.gold, c.prediction));
}

TEST(F1, NormalizationIsIdempotent) {
  for (const auto& c : camels::testing::f1_table()) {
    EXPECT_EQ(normalize_answer(normalize_answer(c.gold)), normalize_answer(c.gold));
    EXPECT_EQ(f1_token_overlap(normalize_answer(c.prediction), normalize_answer(c.gold)),
              f1_token_overlap(c.prediction, c.gold));
  }
}

TEST(F1, StaysInUnitInterval) {
  for (const auto& a : camels::testing::f1_table())
    for (const auto& b : camels::testing::f1_table()) {
      const double f = f1_token_overlap(a.prediction, b.gold);
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
    }
}

TEST(Normalize, DropsCasePunctuationArticlesAndSpaces) {
  EXPECT_EQ(normalize_answer("  The  Heat-Miser, AN  anthem! "), "heatmiser anthem");
  EXPECT_EQ(normalize_answer("a"), "");
}

TEST(ExactMatch, Cases) {
  EXPECT_EQ(exact_match("Paris", "Paris"), 1);
  EXPECT_EQ(exact_match("PARIS", "paris"), 1);
  EXPECT_EQ(exact_match("the Paris.", "paris"), 1);
  EXPECT_EQ(exact_match("Rome", "Paris"), 0);
}

TEST(StandardError, HandValues) {
  // values 1, 2, 3, 4: sample variance 5/3, se = sqrt(5/3 / 4)
  EXPECT_DOUBLE_EQ(standard_error({1, 2, 3, 4}), std::sqrt(5.0 / 12.0));
  EXPECT_TRUE(std::isnan(standard_error({0.5})));
  EXPECT_TRUE(std::isnan(standard_error({})));
  EXPECT_EQ(standard_error({2, 2, 2}), 0.0);
}

namespace {

DocumentTriple triple(const std::string& id, const std::string& text, const std::string& q, const std::string& a) {
  DocumentTriple t;
  t.id = id;
  t.text = text;
  t.categories.assign(detail::split_whitespace(text).size(), "FILLER");
  t.question = q;
  t.answer = a;
  return t;
}

struct SweepFixture : ::testing::Test {
  std::vector<DocumentTriple> triples = {
      triple("d0", "Ada Kovaro was born in Bimaton .", "Ada Kovaro was born in", "Bimaton"),
      triple("d1", "Ben Rulomi works for Tazcorp .", "Ben Rulomi works for", "Tazcorp"),
      triple("d2", "Cy Vanesto owns a kite .", "Cy Vanesto owns a", "kite"),
  };
  Vocabulary vocab = vocab_of({triples[0].text, triples[1].text, triples[2].text});
  LmParams base = init_lm(tiny_config(vocab.size(), 5));
  StreamTask task = make_stream_task(triples, vocab);
  AdaptConfig cfg;
  Weighter zero = [](const Document& d) { return TokenWeights::constant(d.tokens.size(), 0.0); };
  Weighter uniform = [](const Document& d) { return uniform_weights(d.tokens); };
};

}  // namespace

TEST_F(SweepFixture, SingleRateIsSelected) {
  auto r = lr_sweep(base, uniform, task, vocab, {1e-3}, cfg);
  ASSERT_EQ(r.arms.size(), 1u);
  EXPECT_EQ(r.selected_lr, 1e-3);
  EXPECT_EQ(r.selected_f1, r.arms[0].f1);
}

TEST_F(SweepFixture, TiesGoToSmallerRate) {
  // Zero weights leave the model untouched, so every arm scores the same.
  auto r = lr_sweep(base, zero, task, vocab, {1e-2, 1e-4, 1e-3}, cfg);
  EXPECT_EQ(r.selected_lr, 1e-4);
  EXPECT_EQ(r.arms.front().lr, 1e-4);
  EXPECT_EQ(r.arms.back().lr, 1e-2);
}

TEST_F(SweepFixture, GridOrderDoesNotMatterAndSelectionReproduces) {
  auto a = lr_sweep(base, uniform, task, vocab, {3e-2, 1e-3, 1e-1}, cfg);
  auto b = lr_sweep(base, uniform, task, vocab, {1e-1, 3e-2, 1e-3}, cfg, 2);
  EXPECT_EQ(a.selected_lr, b.selected_lr);
  EXPECT_EQ(a.selected_f1, b.selected_f1);
  AdaptConfig c = cfg;
  c.adam.lr = a.selected_lr;
  auto run = adapt_stream(base, task.docs, uniform, c);
  EXPECT_EQ(evaluate_queries(run.params(), task.queries, vocab).mean_f1(), a.selected_f1);
}

TEST_F(SweepFixture, DivergedArmScoresZeroAndIsFlagged) {
  auto r = lr_sweep(base, uniform, task, vocab, {1e-3, INFINITY}, cfg);
  ASSERT_EQ(r.arms.size(), 2u);
  EXPECT_FALSE(r.arms[0].diverged);
  EXPECT_TRUE(r.arms[1].diverged);
  EXPECT_EQ(r.arms[1].f1, 0.0);
  EXPECT_FALSE(r.arms[1].note.empty());
  EXPECT_EQ(r.selected_lr, 1e-3);
  EXPECT_THROW(lr_sweep(base, uniform, task, vocab, {}, cfg), std::invalid_argument);
}

TEST_F(SweepFixture, ScoreReportAggregates) {
  cfg.adam.lr = 1e-2;
  StreamTask rev = task;
  std::reverse(rev.docs.begin(), rev.docs.end());
  auto r = evaluate_method(base, uniform, {task, rev}, vocab, cfg);
  ASSERT_EQ(r.per_seed.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(r.adapted_f1[s], mean_of(r.per_seed[s].f1), 1e-12);
  EXPECT_NEAR(r.mean_adapted, 0.5 * (r.adapted_f1[0] + r.adapted_f1[1]), 1e-12);
  EXPECT_NEAR(r.abs_change, r.mean_adapted - r.mean_base, 1e-12);
  EXPECT_FALSE(std::isnan(r.se_adapted));
  EXPECT_NE(r.stream_hashes[0], r.stream_hashes[1]);
  auto one = evaluate_method(base, uniform, {task}, vocab, cfg);
  EXPECT_TRUE(std::isnan(one.se_adapted));
}

TEST_F(SweepFixture, TransferMatrixShapeDiagonalAndStreams) {
  LmConfig trunk = tiny_config(vocab.size(), 9);
  std::map<std::string, WeightModelParams> phis = {{"A", init_weight_model(trunk, 8)},
                                                   {"B", init_weight_model(tiny_config(vocab.size(), 10), 8)}};
  StreamTask b_task = make_stream_task({triples[2], triples[0]}, vocab);
  std::map<std::string, std::vector<StreamTask>> streams = {{"A", {task}}, {"B", {b_task}}};
  std::map<std::string, double> lr = {{"A", 1e-2}, {"B", 3e-3}};
  auto m = transfer_matrix(base, {"A", "B"}, phis, streams, lr, vocab, cfg);
  EXPECT_EQ(m.size(), 4u);
  AdaptConfig c = cfg;
  c.adam.lr = 1e-2;
  auto diag = evaluate_method(base, learned_weighter(phis.at("A")), {task}, vocab, c);
  EXPECT_EQ(m.at({"A", "A"}).adapted_f1, diag.adapted_f1);
  for (const auto& te : {"A", "B"})
    EXPECT_EQ(m.at({"A", te}).stream_hashes, m.at({"B", te}).stream_hashes);
  phis.erase("B");
  try {
    transfer_matrix(base, {"A", "B"}, phis, streams, lr, vocab, cfg);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("(B -> A)"), std::string::npos) << e.what();
  }
}

TEST(StreamHash, SensitiveToOrderAndContent) {
  Vocabulary v = vocab_of({"x y"});
  auto a = make_stream_task({triple("1", "x y", "x", "y"), triple("2", "y", "x", "y")}, v);
  auto b = a;
  std::swap(b.docs[0], b.docs[1]);
  EXPECT_NE(stream_hash(a.docs), stream_hash(b.docs));
  EXPECT_EQ(stream_hash(a.docs), stream_hash(make_stream_task(a.queries, v).docs));
}

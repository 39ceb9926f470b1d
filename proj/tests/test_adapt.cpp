#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "camels/adapt/analysis.hpp"
#include "support/tiny_lm.hpp"

using namespace camels;
using camels::testing::tiny_config;
using camels::testing::vocab_of;

namespace {

struct StreamFixture : ::testing::Test {
  std::vector<std::string> texts = {"Ada Kovaro was born in Bimaton .", "Ben Rulomi works for Tazcorp .",
                                    "Cy Vanesto owns a red kite .", "the quiet river runs past the old mill ."};
  Vocabulary vocab = vocab_of(texts);
  LmParams base = init_lm(tiny_config(vocab.size(), 11));
  std::vector<Document> docs;
  Weighter uniform = [](const Document& d) { return uniform_weights(d.tokens); };

  void SetUp() override {
    for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back(make_document("d" + std::to_string(i), texts[i], {}, vocab));
  }
};

double max_abs_diff(const NamedTensors& a, const NamedTensors& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.at(i).numel(); ++j) m = std::max(m, std::abs(a.at(i)[j] - b.at(a.name(i))[j]));
  return m;
}

}  // namespace

// Plain fine-tuning written out by hand: mean token NLL, bias-corrected Adam on flat arrays.
TEST_F(StreamFixture, UniformWeightsMatchPlainFineTuning) {
  AdaptConfig cfg;
  cfg.adam.lr = 3e-3;
  StreamRun run = adapt_stream(base, docs, uniform, cfg);

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 3e-3;
  NamedTensors theta = base.tensors.detached();
  std::vector<std::vector<double>> m(theta.size()), v(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i].assign(theta.at(i).numel(), 0.0);
    v[i].assign(theta.at(i).numel(), 0.0);
  }
  int t = 0;
  for (const auto& d : docs) {
    Tape tape;
    LmParams p{base.config, theta.watched(tape)};
    Tensor loss = mean(token_nll(p, d.tokens));
    GradientMap g = backward(loss, p.tensors);
    ++t;
    NamedTensors next;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      std::vector<double> vals(theta.at(i).values().begin(), theta.at(i).values().end());
      for (std::size_t j = 0; j < vals.size(); ++j) {
        const double gj = g.at(theta.name(i))[j];
        m[i][j] = b1 * m[i][j] + (1 - b1) * gj;
        v[i][j] = b2 * v[i][j] + (1 - b2) * gj * gj;
        vals[j] -= lr * (m[i][j] / (1 - std::pow(b1, t))) / (std::sqrt(v[i][j] / (1 - std::pow(b2, t))) + eps);
      }
      next.insert(theta.name(i), Tensor(theta.at(i).shape(), std::move(vals)));
    }
    theta = std::move(next);
  }
  EXPECT_LE(max_abs_diff(run.theta, theta), 1e-12);
  EXPECT_EQ(run.step, docs.size());
  EXPECT_EQ(run.docs_done, docs.size());
}

TEST_F(StreamFixture, EmptyStreamLeavesParametersAndKeepsOneCheckpoint) {
  StreamRun run = adapt_stream(base, {}, uniform, AdaptConfig{});
  EXPECT_EQ(max_abs_diff(run.theta, base.tensors), 0.0);
  ASSERT_EQ(run.checkpoints.size(), 1u);
  EXPECT_EQ(run.checkpoints[0].docs, 0u);
  EXPECT_TRUE(run.log.empty());
}

TEST_F(StreamFixture, ZeroWeightsLeaveParametersUnchanged) {
  AdaptConfig cfg;
  cfg.adam.lr = 1e-2;
  StreamRun run = adapt_stream(base, docs, [](const Document& d) { return TokenWeights::constant(d.tokens.size(), 0.0); }, cfg);
  EXPECT_EQ(max_abs_diff(run.theta, base.tensors), 0.0);
  for (const auto& e : run.log) EXPECT_EQ(e.grad_norm, 0.0);
}

TEST_F(StreamFixture, WrongWeightLengthIsAnError) {
  Weighter bad = [](const Document& d) { return TokenWeights::constant(d.tokens.size() + 1, 1.0); };
  EXPECT_THROW(adapt_stream(base, docs, bad, AdaptConfig{}), std::invalid_argument);
}

TEST_F(StreamFixture, SplitAndResumedRunIsBitExact) {
  AdaptConfig cfg;
  cfg.adam.lr = 2e-3;
  cfg.checkpoint_every = 1;
  StreamRun whole = adapt_stream(base, docs, uniform, cfg);

  StreamRun first = start_run(base, cfg);
  continue_run(first, {docs.begin(), docs.begin() + 2}, uniform, cfg);
  const auto path = std::filesystem::temp_directory_path() / "camels_resume_test.bin";
  save_run_state(first, path);
  StreamRun second = load_run_state(path, base.config, cfg);
  std::filesystem::remove(path);
  continue_run(second, {docs.begin() + 2, docs.end()}, uniform, cfg);
  EXPECT_EQ(max_abs_diff(second.theta, whole.theta), 0.0);
  EXPECT_EQ(second.step, whole.step);
  EXPECT_EQ(second.docs_done, whole.docs_done);
  EXPECT_EQ(second.adam.step, whole.adam.step);
}

TEST_F(StreamFixture, FreshOptimizerPerDocumentDiffersFromPersistent) {
  AdaptConfig a;
  a.adam.lr = 2e-3;
  AdaptConfig b = a;
  b.persist_optimizer = false;
  StreamRun ra = adapt_stream(base, docs, uniform, a);
  StreamRun rb = adapt_stream(base, docs, uniform, b);
  EXPECT_GT(max_abs_diff(ra.theta, rb.theta), 0.0);
  EXPECT_EQ(rb.adam.step, 1);
}

TEST_F(StreamFixture, CheckpointCountIsCeilLengthOverPeriodPlusOne) {
  for (std::size_t m : {1u, 2u, 3u, 4u, 5u}) {
    AdaptConfig cfg;
    cfg.adam.lr = 1e-3;
    cfg.checkpoint_every = m;
    StreamRun run = adapt_stream(base, docs, uniform, cfg);
    const std::size_t L = docs.size();
    EXPECT_EQ(run.checkpoints.size(), (L + m - 1) / m + 1) << "M=" << m;
    EXPECT_EQ(run.checkpoints.front().docs, 0u);
    EXPECT_EQ(run.checkpoints.back().docs, L);
  }
}

TEST_F(StreamFixture, NonFiniteUpdateHaltsAndKeepsEarlierState) {
  AdaptConfig cfg;
  cfg.adam.lr = INFINITY;
  StreamRun run = adapt_stream(base, docs, uniform, cfg);
  EXPECT_TRUE(run.halted);
  EXPECT_EQ(run.halted_doc, "d0");
  EXPECT_EQ(run.docs_done, 0u);
  EXPECT_EQ(max_abs_diff(run.theta, base.tensors), 0.0);
}

// Oracle: a separate forward pass per position, differentiating only NLL_t.
TEST_F(StreamFixture, GradientNormProfileMatchesPerPositionOracle) {
  const auto& x = docs[0].tokens;
  std::vector<double> a(x.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = 0.25 * double(t % 4);
  auto prof = gradient_norm_profile(base, x, TokenWeights(a));
  ASSERT_EQ(prof.raw.size(), x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    Tape tape;
    LmParams p = base.watched(tape);
    Tensor nll_t = sum(pick(reshape(token_nll(p, x), {1, x.size()}), {t}));
    GradientMap g = backward(nll_t, p.tensors);
    double sq = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (double v : g.at(i).values()) sq += v * v;
    const double raw = std::sqrt(sq);
    EXPECT_NEAR(prof.raw[t], raw, 1e-10 * std::max(1.0, raw));
    EXPECT_NEAR(prof.weighted[t], a[t] / double(x.size()) * raw, 1e-10 * std::max(1.0, raw));
  }
}

TEST(TimeSinceDoc, HandBinnedLags) {
  // Three queries whose documents sit at stream positions 0, 3 and 5;
  // checkpoints after 2 and 6 documents, bin width 2.
  std::vector<CurvePoint> curve(2);
  curve[0].docs = 2;
  curve[0].all.f1 = {0.5, 0.0, 0.25};
  curve[1].docs = 6;
  curve[1].all.f1 = {1.0, 1.0, 0.0};
  std::vector<double> base = {0.0, 0.0, 0.5};
  std::vector<std::optional<std::size_t>> pos = {0, 3, 5};
  // lags: ckpt 2 -> 1, -2, -4 ; ckpt 6 -> 5, 2, 0
  // bins (width 2): 1->0, -2->-2, -4->-4, 5->4, 2->2, 0->0
  auto t = time_since_doc_analysis(curve, base, pos, 2);
  EXPECT_EQ(t.pairs, 6u);
  EXPECT_EQ(t.unlinked, 0u);
  ASSERT_EQ(t.unobserved.size(), 2u);
  EXPECT_EQ(t.unobserved[0].lag_start, -4);
  EXPECT_DOUBLE_EQ(t.unobserved[0].mean_improvement, -0.25);
  EXPECT_EQ(t.unobserved[1].lag_start, -2);
  EXPECT_DOUBLE_EQ(t.unobserved[1].mean_improvement, 0.0);
  ASSERT_EQ(t.observed.size(), 3u);
  EXPECT_EQ(t.observed[0].lag_start, 0);
  EXPECT_EQ(t.observed[0].count, 2u);
  EXPECT_DOUBLE_EQ(t.observed[0].mean_improvement, 0.0);  // (0.5 + -0.5) / 2
  EXPECT_DOUBLE_EQ(t.observed[0].standard_error, 0.5);    // sd 1/sqrt(2), over sqrt(2)
  EXPECT_EQ(t.observed[1].lag_start, 2);
  EXPECT_DOUBLE_EQ(t.observed[1].mean_improvement, 1.0);
  EXPECT_TRUE(std::isnan(t.observed[1].standard_error));
  EXPECT_EQ(t.observed[2].lag_start, 4);
  EXPECT_DOUBLE_EQ(t.observed[2].mean_improvement, 1.0);
}

TEST(TimeSinceDoc, UnlinkedQueriesAreCountedAndSkipped) {
  std::vector<CurvePoint> curve(1);
  curve[0].docs = 1;
  curve[0].all.f1 = {1.0, 1.0};
  auto t = time_since_doc_analysis(curve, {0.0, 0.0}, {std::nullopt, std::size_t{0}}, 5);
  EXPECT_EQ(t.unlinked, 1u);
  EXPECT_EQ(t.pairs, 1u);
  EXPECT_THROW(time_since_doc_analysis(curve, {0.0, 0.0}, {0, 0}, 0), std::invalid_argument);
}

TEST_F(StreamFixture, CheckpointEvalScoresEveryCheckpoint) {
  std::vector<DocumentTriple> q(1);
  q[0].id = "q";
  q[0].question = "Ada Kovaro was born in";
  q[0].answer = "Bimaton";
  AdaptConfig cfg;
  cfg.adam.lr = 1e-3;
  cfg.checkpoint_every = 3;
  StreamRun run = adapt_stream(base, docs, uniform, cfg);
  auto curve = checkpoint_eval(run, q, q, vocab);
  ASSERT_EQ(curve.size(), run.checkpoints.size());
  EXPECT_EQ(curve[0].f1_all, evaluate_queries(base, q, vocab).mean_f1());
  EXPECT_EQ(curve.back().f1_all, evaluate_queries(run.params(), q, vocab).mean_f1());
  std::ostringstream os;
  write_curve_csv(os, curve);
  EXPECT_EQ(os.str().substr(0, 26), "docs,f1_all,f1_unrelated\n0");
}

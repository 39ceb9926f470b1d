#include <gtest/gtest.h>

#include <cmath>

#include "camels/meta/trainer.hpp"
#include "support/meta_fd.hpp"

using namespace camels;
using camels::testing::tiny_config;
using camels::testing::vocab_of;

namespace {

double max_abs_diff(const NamedTensors& a, const NamedTensors& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.at(i).numel(); ++j) m = std::max(m, std::abs(a.at(i)[j] - b.at(a.name(i))[j]));
  return m;
}

struct MetaFixture : ::testing::Test {
  std::vector<std::string> texts = {"Ada Kovaro was born in Bimaton .", "Ben Rulomi works for Tazcorp .",
                                    "Cy Vanesto owns a red kite .", "Di Pelormo is a baker ."};
  std::vector<std::pair<std::string, std::string>> qa = {{"Ada Kovaro was born in", "Bimaton"},
                                                         {"Ben Rulomi works for", "Tazcorp"},
                                                         {"Cy Vanesto owns a", "red kite"},
                                                         {"Di Pelormo is a", "baker"}};
  Vocabulary vocab = vocab_of({texts[0], texts[1], texts[2], texts[3], "the old bridge fell . a cold wind blew ."});
  LmParams proxy = init_lm(tiny_config(vocab.size(), 5));
  WeightModelParams phi = init_weight_model(tiny_config(vocab.size(), 6), 8);
  std::vector<MetaExample> train;
  std::vector<TokenSequence> loc = {tokenize("the old bridge fell .", vocab), tokenize("a cold wind blew .", vocab)};

  void SetUp() override {
    const std::vector<std::vector<std::string>> cats = {
        {"ENTITY", "ENTITY", "RELATION", "RELATION", "RELATION", "VALUE", "FILLER"},
        {"ENTITY", "ENTITY", "RELATION", "RELATION", "VALUE", "FILLER"},
        {"ENTITY", "ENTITY", "RELATION", "RELATION", "VALUE", "VALUE", "FILLER"},
        {"ENTITY", "ENTITY", "RELATION", "RELATION", "VALUE", "FILLER"}};
    for (std::size_t i = 0; i < texts.size(); ++i)
      train.push_back({make_document("d" + std::to_string(i), texts[i], cats[i], vocab), tokenize(qa[i].first, vocab),
                       tokenize(qa[i].second, vocab)});
  }

  MetaConfig small(std::size_t k, std::size_t per_update, std::size_t episodes) const {
    MetaConfig c;
    c.inner_lr = 0.05;
    c.outer_lr = 1e-2;
    c.k = k;
    c.micro_batch = k;
    c.accumulation = k * per_update;
    c.episodes = episodes;
    c.seed = 3;
    return c;
  }
};

}  // namespace

TEST_F(MetaFixture, ZeroWeightsOrZeroRateLeaveTheProxy) {
  const auto& x = train[0].doc.tokens;
  EXPECT_EQ(max_abs_diff(inner_step(proxy, x, TokenWeights::constant(x.size(), 0.0), 0.1).tensors, proxy.tensors), 0.0);
  EXPECT_EQ(max_abs_diff(inner_step(proxy, x, uniform_weights(x), 0.0).tensors, proxy.tensors), 0.0);
}

TEST_F(MetaFixture, InnerStepIsPlainSgdOnWeightedLoss) {
  const auto& x = train[1].doc.tokens;
  TokenWeights w({0.5, 1.0, 0.0, 2.0, 1.5, 0.25});
  ASSERT_EQ(w.size(), x.size());
  Tape tape;
  LmParams p = proxy.watched(tape);
  GradientMap g = backward(weighted_nll(p, x, w), p.tensors);
  LmParams next = inner_step(proxy, x, w, 0.3);
  for (std::size_t i = 0; i < proxy.tensors.size(); ++i)
    for (std::size_t j = 0; j < proxy.tensors.at(i).numel(); ++j)
      ASSERT_NEAR(next.tensors.at(i)[j], proxy.tensors.at(i)[j] - 0.3 * g.at(proxy.tensors.name(i))[j], 1e-15);
}

// theta = (p, q), L = w (p q - 1)^2 / 2 with w = phi^2, outer O = p' + 2 q'.
// At p = 2, q = 1, phi = 1.5, alpha = 0.1:
//   p' = p - alpha w (pq-1) q = 1.775,  q' = q - alpha w (pq-1) p = 0.55
//   dO/dw = -alpha (pq-1)(q + 2p) = -0.5, so dO/dphi = -0.5 * 2 phi = -1.5
//   dO/dp = (1 - alpha w q^2) + 2 (-alpha w (2pq - 1)) = 0.775 - 1.35 = -0.575
TEST(MetaToy, TwoParameterHandGradient) {
  Tape tape;
  NamedTensors theta;
  theta.insert("p", Tensor::scalar(2.0));
  theta.insert("q", Tensor::scalar(1.0));
  theta = theta.watched(tape);
  Tensor phi = tape.watch(Tensor::scalar(1.5));
  Tensor w = mul(phi, phi);
  Tensor r = sub(mul(theta.at("p"), theta.at("q")), Tensor::scalar(1.0));
  Tensor inner = scale(mul(w, mul(r, r)), 0.5);
  NamedTensors next = sgd_step(theta, backward(inner, theta, true), 0.1, true);
  EXPECT_NEAR(next.at("p").item(), 1.775, 1e-12);
  EXPECT_NEAR(next.at("q").item(), 0.55, 1e-12);
  Tensor outer = add(next.at("p"), scale(next.at("q"), 2.0));
  auto g = gradients(outer, {phi, theta.at("p")});
  EXPECT_NEAR(g[0].item(), -1.5, 1e-12);
  EXPECT_NEAR(g[1].item(), -0.575, 1e-12);
}

TEST_F(MetaFixture, SingleDocumentRolloutIsOneInnerStep) {
  const auto& x = train[2].doc.tokens;
  LmParams a = inner_rollout(proxy, {&x}, phi, 0.05);
  LmParams b = inner_step(proxy, x, learned_weights(phi, x), 0.05);
  EXPECT_LE(max_abs_diff(a.tensors, b.tensors), 1e-12);
}

TEST_F(MetaFixture, TwoDocumentRolloutChainsTwoSteps) {
  const auto& x0 = train[0].doc.tokens;
  const auto& x1 = train[3].doc.tokens;
  LmParams a = inner_rollout(proxy, {&x0, &x1}, phi, 0.05);
  LmParams b = inner_step(inner_step(proxy, x0, learned_weights(phi, x0), 0.05), x1, learned_weights(phi, x1), 0.05);
  EXPECT_LE(max_abs_diff(a.tensors, b.tensors), 1e-12);
  EXPECT_THROW(inner_rollout(proxy, {}, phi, 0.05), std::invalid_argument);
}

TEST_F(MetaFixture, LocalityLossProperties) {
  EXPECT_EQ(locality_loss(proxy, proxy, loc[0]).item(), 0.0);
  LmParams moved = inner_step(proxy, train[0].doc.tokens, uniform_weights(train[0].doc.tokens), 0.5);
  for (const auto& x : loc) EXPECT_GE(locality_loss(proxy, moved, x).item(), 0.0);
  EXPECT_GT(locality_loss(proxy, moved, loc[0]).item(), 0.0);

  TokenSequence one;
  one.ids = {loc[0].ids[0]};
  one.word_index = {0};
  // The one distribution conditions on [BOS] x0.
  const std::vector<TokenId> in = {Vocabulary::kBos, one.ids[0]};
  Tensor base_logits = project_logits(proxy, forward_hidden(proxy, in), {1});
  Tensor moved_logits = project_logits(moved, forward_hidden(moved, in), {1});
  EXPECT_NEAR(locality_loss(proxy, moved, one).item(), kl_divergence(base_logits, moved_logits).item(), 1e-12);
}

TEST(OuterLoss, CombinesQueryAndLocality) {
  EXPECT_DOUBLE_EQ(combine_outer_loss(Tensor::scalar(2.0), Tensor::scalar(0.5), 0.1).item(), 2.05);
  EXPECT_DOUBLE_EQ(combine_outer_loss(Tensor::scalar(2.0), Tensor::scalar(0.5), 0.0).item(), 2.0);
}

TEST_F(MetaFixture, OuterLossAtUnmovedProxyIsQueryNll) {
  std::vector<QaPair> q = {{train[0].question, train[0].answer}, {train[1].question, train[1].answer}};
  auto parts = outer_loss(proxy, q, proxy, loc[0], 0.1);
  EXPECT_EQ(parts.locality.item(), 0.0);
  const double mean_q = 0.5 * (conditional_nll(proxy, q[0].question, q[0].answer).item() +
                               conditional_nll(proxy, q[1].question, q[1].answer).item());
  EXPECT_NEAR(parts.query.item(), mean_q, 1e-12);
  EXPECT_NEAR(parts.total.item(), mean_q, 1e-12);
}

// Minimizing (theta - 1)^2 + c theta^2 by gradient descent; the locality part
// theta^2 at the optimum must not grow as c grows.
TEST(OuterLoss, LocalityPressureOnOneParameterToy) {
  double previous = INFINITY;
  for (double c : {0.0, 0.05, 0.1, 0.5, 1.0, 4.0}) {
    double theta = 0.0;
    for (int it = 0; it < 4000; ++it) {
      Tape tape;
      Tensor t = tape.watch(Tensor::scalar(theta));
      Tensor d = sub(t, Tensor::scalar(1.0));
      Tensor f = combine_outer_loss(mul(d, d), mul(t, t), c);
      theta -= 0.05 * gradient(f, t).item();
    }
    EXPECT_NEAR(theta, 1.0 / (1.0 + c), 1e-9);
    const double loc = theta * theta;
    EXPECT_LE(loc, previous + 1e-15) << "c = " << c;
    previous = loc;
  }
}

TEST(MetaGradient, SecondOrderMatchesFiniteDifferencesOnWidthEightProxy) {
  camels::testing::MiniMeta m;
  auto r = camels::testing::check_meta_gradient(m);
  EXPECT_GT(r.checked, 500u);
  EXPECT_EQ(r.failed, 0u) << r.first_failure;
}

TEST_F(MetaFixture, ConfigValidation) {
  MetaConfig c = small(2, 2, 4);
  EXPECT_NO_THROW(c.validate());
  c.micro_batch = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(2, 2, 4);
  c.accumulation = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(2, 2, 4);
  c.c_reset = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST_F(MetaFixture, ResetFlagsFallOnMultiplesOfResetPeriod) {
  MetaConfig c = small(1, 2, 10);
  c.c_reset = 3;
  auto st = start_meta_training(phi, proxy, c);
  meta_train(st, train, loc, c);
  ASSERT_EQ(st.log.size(), 10u);
  for (const auto& r : st.log) EXPECT_EQ(r.proxy_reset, r.episode % 3 == 0) << r.episode;
  EXPECT_EQ(max_abs_diff(st.pristine.tensors, proxy.tensors), 0.0);
}

// With one episode per update the proxy after each step is the rollout from
// the proxy the episode started on, which is the pristine snapshot exactly
// when the episode index is a multiple of c_reset.
TEST_F(MetaFixture, EpisodesStartFromCarriedOrPristineProxy) {
  for (std::size_t reset : {1u, 2u}) {
    MetaConfig c = small(2, 1, 2);
    c.c_reset = reset;
    auto st = start_meta_training(phi, proxy, c);
    Episode e0{{&train[0], &train[1]}, &loc[0]};
    Episode e1{{&train[2], &train[3]}, &loc[1]};
    meta_train_step(st, {e0}, c);
    const NamedTensors after0 = st.proxy;
    const WeightModelParams phi1 = st.phi;
    meta_train_step(st, {e1}, c);
    const LmParams start{proxy.config, reset == 1 ? proxy.tensors : after0};
    LmParams expect = inner_rollout(start, {&train[2].doc.tokens, &train[3].doc.tokens}, phi1, c.inner_lr);
    EXPECT_LE(max_abs_diff(st.proxy, expect.tensors), 1e-12) << "c_reset " << reset;
    EXPECT_EQ(st.log[1].proxy_reset, reset == 1);
  }
}

TEST_F(MetaFixture, StepChecksEpisodeCounts) {
  MetaConfig c = small(2, 2, 4);
  auto st = start_meta_training(phi, proxy, c);
  Episode e{{&train[0], &train[1]}, &loc[0]};
  EXPECT_THROW(meta_train_step(st, {e}, c), std::invalid_argument);
  Episode short_e{{&train[0]}, &loc[0]};
  EXPECT_THROW(meta_train_step(st, {short_e, short_e}, c), std::invalid_argument);
}

TEST_F(MetaFixture, UpdateChangesPhiAndLogsCategories) {
  MetaConfig c = small(2, 2, 4);
  auto st = start_meta_training(phi, proxy, c);
  meta_train(st, train, loc, c);
  EXPECT_EQ(st.episode, 4u);
  EXPECT_GT(max_abs_diff(st.phi.tensors, phi.tensors), 0.0);
  for (const auto& r : st.log) {
    EXPECT_TRUE(std::isfinite(r.outer_loss));
    EXPECT_NEAR(r.outer_loss, r.query_nll + c.c_loc * r.locality, 1e-12);
    EXPECT_TRUE(r.mean_weight_by_category.count("VALUE"));
  }
  auto j = to_json(st.log[0]);
  EXPECT_TRUE(j.contains("mean_weight_by_category"));
}

TEST_F(MetaFixture, IdenticalRunsGiveBitIdenticalPhi) {
  MetaConfig c = small(2, 2, 4);
  auto a = start_meta_training(phi, proxy, c);
  auto b = start_meta_training(phi, proxy, c);
  meta_train(a, train, loc, c);
  meta_train(b, train, loc, c);
  EXPECT_EQ(max_abs_diff(a.phi.tensors, b.phi.tensors), 0.0);
  c.seed = 4;
  auto d = start_meta_training(phi, proxy, c);
  meta_train(d, train, loc, c);
  EXPECT_GT(max_abs_diff(a.phi.tensors, d.phi.tensors), 0.0);
}

TEST_F(MetaFixture, MeanWeightByCategoryAveragesPerLabel) {
  std::vector<Document> docs = {train[0].doc, train[1].doc};
  auto m = mean_weight_by_category(phi, docs);
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& d : docs) {
    TokenWeights w = learned_weights(phi, d.tokens);
    for (std::size_t t = 0; t < w.size(); ++t)
      if (d.tokens.categories[t] == "VALUE") s += w[t], ++n;
  }
  EXPECT_NEAR(m.at("VALUE"), s / double(n), 1e-12);
}

TEST_F(MetaFixture, QaTuneWithZeroRateIsIdentity) {
  std::vector<QaPair> pairs;
  for (const auto& e : train) pairs.push_back({e.question, e.answer});
  EXPECT_EQ(max_abs_diff(qa_tune(proxy, pairs, {3, 0.0, 1}).tensors, proxy.tensors), 0.0);
  EXPECT_THROW(qa_tune(proxy, {}, {1, 1e-3, 1}), std::invalid_argument);
}

TEST_F(MetaFixture, QaTuneLossDecreases) {
  std::vector<QaPair> pairs;
  for (const auto& e : train) pairs.push_back({e.question, e.answer});
  std::vector<double> losses;
  LmParams tuned = qa_tune(proxy, pairs, {6, 3e-3, 1}, [&](std::size_t, double l) { losses.push_back(l); });
  ASSERT_EQ(losses.size(), 6u);
  for (std::size_t e = 1; e < losses.size(); ++e) EXPECT_LT(losses[e], losses[e - 1]) << "epoch " << e;
  auto again = qa_tune(proxy, pairs, {6, 3e-3, 1});
  EXPECT_EQ(max_abs_diff(tuned.tensors, again.tensors), 0.0);
}

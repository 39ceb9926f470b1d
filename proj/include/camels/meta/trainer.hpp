#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "camels/autograd/optim.hpp"
#include "camels/lm/losses.hpp"
#include "camels/meta/base_model.hpp"
#include "camels/weighting/heuristics.hpp"
#include "camels/weighting/weight_model.hpp"

namespace camels {

struct MetaConfig {
  double inner_lr = 5e-4;       // SGD step of the proxy inside an episode
  double c_loc = 0.1;           // locality coefficient
  std::size_t c_reset = 4;      // proxy restored to the pristine snapshot every c_reset episodes
  std::size_t k = 6;            // documents per episode
  double outer_lr = 1e-5;       // Adam on the weight model
  std::size_t accumulation = 24;
  std::size_t micro_batch = 6;  // one micro-batch is one episode of k documents
  std::size_t episodes = 300;
  std::uint64_t seed = 0;

  std::size_t episodes_per_update() const { return accumulation / micro_batch; }

  void validate() const {
    if (k == 0) throw std::invalid_argument("MetaConfig: k must be >= 1");
    if (micro_batch == 0 || accumulation % micro_batch != 0) {
      throw std::invalid_argument("MetaConfig: accumulation " + std::to_string(accumulation) +
                                  " not divisible by micro-batch " + std::to_string(micro_batch));
    }
    if (micro_batch != k) {
      throw std::invalid_argument("MetaConfig: micro-batch " + std::to_string(micro_batch) +
                                  " must equal the episode size k " + std::to_string(k));
    }
    if (!(inner_lr > 0.0) || !(outer_lr > 0.0)) throw std::invalid_argument("MetaConfig: learning rates must be > 0");
    if (!(c_loc >= 0.0)) throw std::invalid_argument("MetaConfig: c_loc must be >= 0");
    if (c_reset == 0) throw std::invalid_argument("MetaConfig: c_reset must be >= 1");
  }
};

/// A document with the question it answers.
struct MetaExample {
  Document doc;
  TokenSequence question;
  TokenSequence answer;
};

struct Episode {
  std::vector<const MetaExample*> batch;
  const TokenSequence* locality = nullptr;
};

/// theta' = theta - lr * grad weighted_nll(theta, x, w). When `differentiable`
/// the step stays on theta's tape (theta must be recorded) so theta' keeps
/// its dependence on w; otherwise a private tape is used and theta' is plain.
inline LmParams inner_step(const LmParams& theta, const TokenSequence& x, const Tensor& w, double lr,
                           bool differentiable) {
  if (differentiable) {
    Tensor loss = weighted_nll(theta, x, w);
    GradientMap g = backward(loss, theta.tensors, true);
    return {theta.config, sgd_step(theta.tensors, g, lr, true)};
  }
  Tape tape;
  LmParams p = theta.detached().watched(tape);
  Tensor loss = weighted_nll(p, x, w.detach());
  GradientMap g = backward(loss, p.tensors);
  return {theta.config, sgd_step(theta.tensors.detached(), g, lr)};
}

inline LmParams inner_step(const LmParams& theta, const TokenSequence& x, const TokenWeights& w, double lr) {
  return inner_step(theta, x, w.tensor(), lr, false);
}

/// k chained differentiable inner steps; weights come from phi per document.
/// theta0 and phi are recorded on one tape, or both plain, in which case a
/// private tape is used and plain parameters come back. `weights_out`
/// receives the weight tensors used, in batch order.
inline LmParams inner_rollout(const LmParams& theta0, const std::vector<const TokenSequence*>& batch,
                              const WeightModelParams& phi, double lr, std::vector<Tensor>* weights_out = nullptr) {
  if (batch.empty()) throw std::invalid_argument("inner_rollout: empty batch");
  const bool theta_rec = theta0.tensors.size() && theta0.tensors.at(0).recorded();
  const bool phi_rec = phi.tensors.size() && phi.tensors.at(0).recorded();
  if (!theta_rec) {
    if (phi_rec) throw std::invalid_argument("inner_rollout: phi is recorded but theta0 is not");
    Tape tape;
    return inner_rollout(theta0.watched(tape), batch, phi.watched(tape), lr, weights_out).detached();
  }
  LmParams theta = theta0;
  for (const TokenSequence* x : batch) {
    Tensor w = weight_model_forward(phi, *x);
    if (weights_out) weights_out->push_back(w);
    theta = inner_step(theta, *x, w, lr, true);
  }
  return theta;
}

/// Sum over prefixes of KL(p_base(.|prefix) || p_adapted(.|prefix)); the base side is constant.
inline Tensor locality_loss(const LmParams& theta_base, const LmParams& theta_adapted, const TokenSequence& x_loc) {
  Tensor base = prefix_distributions(theta_base.detached(), x_loc);
  Tensor adapted = prefix_distributions(theta_adapted, x_loc);
  return kl_divergence(base, adapted, Reduction::kSum);
}

struct OuterLossParts {
  Tensor total;
  Tensor query;
  Tensor locality;
};

inline Tensor combine_outer_loss(const Tensor& query, const Tensor& locality, double c_loc) {
  return c_loc > 0.0 ? add(query, scale(locality, c_loc)) : query;
}

/// Mean answer NLL over the batch plus c_loc times the locality term.
inline OuterLossParts outer_loss(const LmParams& theta_adapted, const std::vector<QaPair>& queries,
                                 const LmParams& theta_base, const TokenSequence& x_loc, double c_loc) {
  if (queries.empty()) throw std::invalid_argument("outer_loss: no queries");
  std::vector<Tensor> terms;
  for (const auto& qa : queries) terms.push_back(reshape(conditional_nll(theta_adapted, qa.question, qa.answer), {1}));
  Tensor query = mean(terms.size() == 1 ? terms[0] : concat(terms, 0));
  Tensor loc = c_loc > 0.0 ? locality_loss(theta_base, theta_adapted, x_loc) : Tensor::scalar(0.0);
  return {combine_outer_loss(query, loc, c_loc), query, loc};
}

struct EpisodeRecord {
  std::size_t episode = 0;
  double outer_loss = 0.0;
  double query_nll = 0.0;
  double locality = 0.0;
  std::map<std::string, double> mean_weight_by_category;
  bool proxy_reset = false;
};

inline nlohmann::json to_json(const EpisodeRecord& r) {
  nlohmann::json j = {{"episode", r.episode},       {"outer_loss", r.outer_loss}, {"query_nll", r.query_nll},
                      {"locality", r.locality},     {"proxy_reset", r.proxy_reset}};
  j["mean_weight_by_category"] = r.mean_weight_by_category;
  return j;
}

struct MetaTrainState {
  WeightModelParams phi;
  NamedTensors proxy;      // carried from episode to episode
  LmParams pristine;       // proxy snapshot restored every c_reset episodes
  AdamState phi_adam;
  std::size_t episode = 0;
  std::vector<EpisodeRecord> log;
};

inline MetaTrainState start_meta_training(const WeightModelParams& phi, const LmParams& proxy, const MetaConfig& cfg) {
  cfg.validate();
  return {phi.detached(), proxy.tensors.detached(), proxy.detached(),
          AdamState::fresh(phi.tensors, AdamConfig{cfg.outer_lr}), 0, {}};
}

/// Runs one episode per micro-batch, averages their phi-gradients and takes
/// one Adam step on phi. The proxy continues from each episode's adapted
/// parameters and is restored whenever the episode index is a multiple of c_reset.
inline void meta_train_step(MetaTrainState& state, const std::vector<Episode>& episodes, const MetaConfig& cfg) {
  if (episodes.size() != cfg.episodes_per_update()) {
    throw std::invalid_argument("meta_train_step: " + std::to_string(episodes.size()) + " episodes, expected " +
                                std::to_string(cfg.episodes_per_update()));
  }
  GradientMap total;
  for (const auto& ep : episodes) {
    if (ep.batch.size() != cfg.k) throw std::invalid_argument("meta_train_step: episode batch must have k documents");
    EpisodeRecord rec;
    rec.episode = state.episode;
    rec.proxy_reset = state.episode % cfg.c_reset == 0;
    if (rec.proxy_reset) state.proxy = state.pristine.tensors;

    Tape tape;
    WeightModelParams phi = state.phi.watched(tape);
    LmParams theta0{state.pristine.config, state.proxy.watched(tape)};
    std::vector<const TokenSequence*> docs;
    std::vector<QaPair> queries;
    for (const auto* ex : ep.batch) {
      docs.push_back(&ex->doc.tokens);
      queries.push_back({ex->question, ex->answer});
    }
    std::vector<Tensor> weights;
    LmParams adapted = inner_rollout(theta0, docs, phi, cfg.inner_lr, &weights);
    OuterLossParts loss = outer_loss(adapted, queries, theta0, *ep.locality, cfg.c_loc);
    rec.outer_loss = loss.total.item();
    rec.query_nll = loss.query.item();
    rec.locality = loss.locality.item();

    GradientMap g = backward(loss.total, phi.tensors);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (double v : g.at(i).values()) {
        if (!std::isfinite(v)) {
          throw NumericError("meta_train_step: non-finite outer gradient for " + g.name(i) + " in episode " +
                             std::to_string(state.episode) + " (outer loss " + std::to_string(rec.outer_loss) + ")");
        }
      }
    }
    if (total.empty()) {
      total = g;
    } else {
      GradientMap sum;
      for (std::size_t i = 0; i < g.size(); ++i) sum.insert(g.name(i), add(total.at(i), g.at(i)));
      total = std::move(sum);
    }

    std::map<std::string, std::pair<double, std::size_t>> by_cat;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (!docs[d]->has_categories()) continue;
      for (std::size_t t = 0; t < docs[d]->size(); ++t) {
        auto& [s, n] = by_cat[docs[d]->categories[t]];
        s += weights[d][t];
        ++n;
      }
    }
    for (const auto& [c, sn] : by_cat) rec.mean_weight_by_category[c] = sn.first / double(sn.second);

    state.proxy = adapted.tensors.detached();
    state.log.push_back(std::move(rec));
    ++state.episode;
  }
  GradientMap avg;
  for (std::size_t i = 0; i < total.size(); ++i)
    avg.insert(total.name(i), scale(total.at(i), 1.0 / double(episodes.size())));
  state.phi.tensors = adam_step(state.phi.tensors, avg, state.phi_adam);
}

/// Draws episodes with replacement from `train` and one locality sequence per
/// episode, all from a generator seeded by cfg.seed. `on_episode` sees every
/// new log record.
inline void meta_train(MetaTrainState& state, const std::vector<MetaExample>& train,
                       const std::vector<TokenSequence>& locality, const MetaConfig& cfg,
                       const std::function<void(const EpisodeRecord&)>& on_episode = {}) {
  if (train.empty() || locality.empty()) throw std::invalid_argument("meta_train: empty training or locality set");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1), pick_loc(0, locality.size() - 1);
  const std::size_t per_update = cfg.episodes_per_update();
  while (state.episode + per_update <= cfg.episodes) {
    std::vector<Episode> eps(per_update);
    for (auto& e : eps) {
      for (std::size_t i = 0; i < cfg.k; ++i) e.batch.push_back(&train[pick(rng)]);
      e.locality = &locality[pick_loc(rng)];
    }
    const std::size_t before = state.log.size();
    meta_train_step(state, eps, cfg);
    if (on_episode)
      for (std::size_t i = before; i < state.log.size(); ++i) on_episode(state.log[i]);
  }
}

/// Mean learned weight per category label over a set of documents.
inline std::map<std::string, double> mean_weight_by_category(const WeightModelParams& phi,
                                                             const std::vector<Document>& docs) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& d : docs) {
    if (!d.tokens.has_categories()) continue;
    TokenWeights w = learned_weights(phi, d.tokens);
    for (std::size_t t = 0; t < w.size(); ++t) {
      auto& [s, n] = acc[d.tokens.categories[t]];
      s += w[t];
      ++n;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [c, sn] : acc) out[c] = sn.first / double(sn.second);
  return out;
}

}  // namespace camels

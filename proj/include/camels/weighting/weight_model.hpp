#pragma once

#include <cmath>
#include <random>

#include "camels/lm/model.hpp"
#include "camels/weighting/token_weights.hpp"

namespace camels {

/// Learned per-token weighting: a head-less transformer trunk followed by a
/// tanh MLP and a softplus output, one weight per document token.
struct WeightModelParams {
  LmConfig trunk;
  std::size_t hidden = 128;
  NamedTensors tensors;  // trunk parameters plus wm.w1, wm.b1, wm.w2, wm.b2

  LmParams trunk_view() const { return {trunk, tensors}; }
  WeightModelParams watched(Tape& tape) const { return {trunk, hidden, tensors.watched(tape)}; }
  WeightModelParams detached() const { return {trunk, hidden, tensors.detached()}; }
};

/// Output bias so a fresh model weights every token by softplus(b) = 1.
inline double unit_softplus_bias() { return std::log(std::exp(1.0) - 1.0); }

inline WeightModelParams init_weight_model(LmConfig trunk, std::size_t hidden = 128) {
  trunk.lm_head = false;
  LmParams base = init_lm(trunk);
  std::mt19937_64 rng(trunk.seed ^ 0x9e3779b97f4a7c15ULL);
  const double d = static_cast<double>(trunk.d_model);
  NamedTensors p = std::move(base.tensors);
  p.insert("wm.w1", detail::normal_tensor({trunk.d_model, hidden}, 1.0 / std::sqrt(d), rng));
  p.insert("wm.b1", Tensor::zeros({hidden}));
  p.insert("wm.w2", detail::normal_tensor({hidden, 1}, 0.1 / std::sqrt(double(hidden)), rng));
  p.insert("wm.b2", Tensor::full({1}, unit_softplus_bias()));
  return {trunk, hidden, std::move(p)};
}

/// Weight for token t reads the trunk state after [BOS] x[0..t], so it sees
/// the token it weights and nothing later. Shape [|x|]; recorded when phi is.
inline Tensor weight_model_forward(const WeightModelParams& phi, const TokenSequence& x) {
  if (x.empty()) return Tensor::zeros({0});
  if (x.size() + 1 > phi.trunk.n_ctx) {
    throw std::length_error("weight_model_forward: " + std::to_string(x.size()) + " tokens exceed trunk context " +
                            std::to_string(phi.trunk.n_ctx - 1));
  }
  std::vector<TokenId> in;
  in.reserve(x.size() + 1);
  in.push_back(Vocabulary::kBos);
  in.insert(in.end(), x.ids.begin(), x.ids.end());
  Tensor h = forward_hidden(phi.trunk_view(), in);
  std::vector<std::size_t> rows(x.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i + 1;
  h = gather_rows(h, std::move(rows));
  const auto& p = phi.tensors;
  Tensor z = tanh(add(matmul(h, p.at("wm.w1")), p.at("wm.b1")));
  Tensor out = softplus(add(matmul(z, p.at("wm.w2")), p.at("wm.b2")));
  return reshape(out, {x.size()});
}

/// Plain-valued weights, no recording.
inline TokenWeights learned_weights(const WeightModelParams& phi, const TokenSequence& x) {
  Tensor w = weight_model_forward(phi.detached(), x);
  return TokenWeights(std::vector<double>(w.values().begin(), w.values().end()));
}

}  // namespace camels

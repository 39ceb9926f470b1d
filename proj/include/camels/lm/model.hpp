#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>

#include "camels/autograd/backward.hpp"
#include "camels/lm/vocab.hpp"

namespace camels {

struct LmConfig {
  std::size_t n_layer = 2;
  std::size_t n_head = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t n_ctx = 256;
  std::size_t vocab_size = 0;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  bool lm_head = true;

  void validate() const {
    if (n_head == 0 || d_model % n_head != 0) {
      throw std::invalid_argument("LmConfig: d_model " + std::to_string(d_model) +
                                  " not divisible by n_head " + std::to_string(n_head));
    }
    if (vocab_size <= Vocabulary::kReserved) throw std::invalid_argument("LmConfig: vocab_size too small");
    if (n_ctx == 0 || d_ff == 0 || n_layer == 0) throw std::invalid_argument("LmConfig: zero extent");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("LmConfig: dropout outside [0, 1)");
  }

  bool operator==(const LmConfig&) const = default;
};

/// Parameters of a decoder-only transformer plus the config that shapes them.
struct LmParams {
  LmConfig config;
  NamedTensors tensors;

  LmParams watched(Tape& tape) const { return {config, tensors.watched(tape)}; }
  LmParams detached() const { return {config, tensors.detached()}; }
};

namespace detail {

inline std::string layer_key(std::size_t i, const char* leaf) {
  return "h." + std::to_string(i) + "." + leaf;
}

inline Tensor normal_tensor(Shape s, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(s), std::move(v));
}

inline Tensor causal_mask(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -1e30;
  return Tensor(Shape{n, n}, std::move(m));
}

inline Tensor dropout(const Tensor& x, double p, std::mt19937_64* rng) {
  if (!rng || p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> m(x.numel());
  for (auto& v : m) v = keep(*rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, Tensor(x.shape(), std::move(m)));
}

}  // namespace detail

/// GPT-style initialization: N(0, 0.02) weights, residual projections scaled
/// by 1/sqrt(2 * n_layer), unit layer-norm gains, zero biases.
inline LmParams init_lm(const LmConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t d = cfg.d_model;
  const double sd = 0.02;
  const double resid_sd = sd / std::sqrt(2.0 * static_cast<double>(cfg.n_layer));
  NamedTensors p;
  p.insert("wte", detail::normal_tensor({cfg.vocab_size, d}, sd, rng));
  p.insert("wpe", detail::normal_tensor({cfg.n_ctx, d}, 0.01, rng));
  for (std::size_t i = 0; i < cfg.n_layer; ++i) {
    using detail::layer_key;
    p.insert(layer_key(i, "ln1.g"), Tensor::ones({d}));
    p.insert(layer_key(i, "ln1.b"), Tensor::zeros({d}));
    p.insert(layer_key(i, "attn.wqkv"), detail::normal_tensor({d, 3 * d}, sd, rng));
    p.insert(layer_key(i, "attn.bqkv"), Tensor::zeros({3 * d}));
    p.insert(layer_key(i, "attn.wo"), detail::normal_tensor({d, d}, resid_sd, rng));
    p.insert(layer_key(i, "attn.bo"), Tensor::zeros({d}));
    p.insert(layer_key(i, "ln2.g"), Tensor::ones({d}));
    p.insert(layer_key(i, "ln2.b"), Tensor::zeros({d}));
    p.insert(layer_key(i, "mlp.w1"), detail::normal_tensor({d, cfg.d_ff}, sd, rng));
    p.insert(layer_key(i, "mlp.b1"), Tensor::zeros({cfg.d_ff}));
    p.insert(layer_key(i, "mlp.w2"), detail::normal_tensor({cfg.d_ff, d}, resid_sd, rng));
    p.insert(layer_key(i, "mlp.b2"), Tensor::zeros({d}));
  }
  p.insert("lnf.g", Tensor::ones({d}));
  p.insert("lnf.b", Tensor::zeros({d}));
  if (cfg.lm_head) {
    p.insert("head.w", detail::normal_tensor({d, cfg.vocab_size}, sd, rng));
    p.insert("head.b", Tensor::zeros({cfg.vocab_size}));
  }
  return {cfg, std::move(p)};
}

/// Final-layer-norm hidden states, one row per input position. Row t depends
/// only on ids[0..t].
inline Tensor forward_hidden(const LmParams& params, std::span<const TokenId> ids,
                             std::mt19937_64* dropout_rng = nullptr) {
  const LmConfig& cfg = params.config;
  const auto& p = params.tensors;
  const std::size_t n = ids.size();
  if (n == 0) throw std::invalid_argument("forward: empty input");
  if (n > cfg.n_ctx) {
    throw std::length_error("forward: sequence of " + std::to_string(n) +
                            " tokens exceeds context " + std::to_string(cfg.n_ctx));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (auto r : rows) {
    if (r >= cfg.vocab_size) throw std::out_of_range("forward: token id " + std::to_string(r) + " >= V");
  }
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;

  const std::size_t d = cfg.d_model, hd = d / cfg.n_head;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor x = add(gather_rows(p.at("wte"), rows), gather_rows(p.at("wpe"), pos));
  x = detail::dropout(x, cfg.dropout, dropout_rng);
  const Tensor mask = detail::causal_mask(n);

  for (std::size_t l = 0; l < cfg.n_layer; ++l) {
    using detail::layer_key;
    Tensor h = layer_norm(x, p.at(layer_key(l, "ln1.g")), p.at(layer_key(l, "ln1.b")));
    Tensor qkv = add(matmul(h, p.at(layer_key(l, "attn.wqkv"))), p.at(layer_key(l, "attn.bqkv")));
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_head);
    for (std::size_t k = 0; k < cfg.n_head; ++k) {
      Tensor q = slice(qkv, 1, k * hd, hd);
      Tensor kk = slice(qkv, 1, d + k * hd, hd);
      Tensor v = slice(qkv, 1, 2 * d + k * hd, hd);
      Tensor att = softmax(add(scale(matmul(q, kk, false, true), att_scale), mask));
      heads.push_back(matmul(att, v));
    }
    Tensor merged = cfg.n_head == 1 ? heads[0] : concat(heads, 1);
    Tensor attn_out = add(matmul(merged, p.at(layer_key(l, "attn.wo"))), p.at(layer_key(l, "attn.bo")));
    x = add(x, detail::dropout(attn_out, cfg.dropout, dropout_rng));

    Tensor h2 = layer_norm(x, p.at(layer_key(l, "ln2.g")), p.at(layer_key(l, "ln2.b")));
    Tensor ff = gelu(add(matmul(h2, p.at(layer_key(l, "mlp.w1"))), p.at(layer_key(l, "mlp.b1"))));
    Tensor mlp_out = add(matmul(ff, p.at(layer_key(l, "mlp.w2"))), p.at(layer_key(l, "mlp.b2")));
    x = add(x, detail::dropout(mlp_out, cfg.dropout, dropout_rng));
  }
  return layer_norm(x, p.at("lnf.g"), p.at("lnf.b"));
}

/// Applies the output head to selected hidden rows (all rows when empty).
inline Tensor project_logits(const LmParams& params, const Tensor& hidden,
                             const std::vector<std::size_t>& rows = {}) {
  if (!params.config.lm_head) throw std::logic_error("project_logits: model has no output head");
  Tensor h = rows.empty() ? hidden : gather_rows(hidden, rows);
  return add(matmul(h, params.tensors.at("head.w")), params.tensors.at("head.b"));
}

/// Next-token logits for every position, shape [n, V].
inline Tensor forward_logits(const LmParams& params, std::span<const TokenId> ids,
                             std::mt19937_64* dropout_rng = nullptr) {
  return project_logits(params, forward_hidden(params, ids, dropout_rng));
}

}  // namespace camels

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "camels/autograd/checkpoint.hpp"
#include "camels/autograd/optim.hpp"
#include "camels/lm/losses.hpp"
#include "camels/weighting/heuristics.hpp"

namespace camels {

using Weighter = std::function<TokenWeights(const Document&)>;

struct AdaptConfig {
  AdamConfig adam{2.5e-5};
  std::size_t steps_per_doc = 1;
  std::size_t checkpoint_every = 200;  // M, in documents
  bool persist_optimizer = true;       // false: fresh Adam moments for every document
  bool log_raw_grad_norm = false;      // extra backward pass for the unweighted gradient norm

  void validate() const {
    if (checkpoint_every == 0) throw std::invalid_argument("AdaptConfig: checkpoint period must be >= 1");
    if (steps_per_doc == 0) throw std::invalid_argument("AdaptConfig: steps per document must be >= 1");
    if (!(adam.lr >= 0.0)) throw std::invalid_argument("AdaptConfig: learning rate must be >= 0");
  }
};

struct DocLogEntry {
  std::string doc_id;
  std::size_t position = 0;
  double loss = 0.0;           // weighted loss before the update
  double grad_norm = 0.0;      // norm of the weighted-loss gradient
  double raw_grad_norm = std::numeric_limits<double>::quiet_NaN();
};

struct RunCheckpoint {
  std::size_t docs = 0;  // documents processed when taken
  NamedTensors theta;
};

struct StreamRun {
  LmConfig config;
  NamedTensors theta;
  AdamState adam;
  std::size_t step = 0;
  std::size_t docs_done = 0;
  std::vector<RunCheckpoint> checkpoints;
  std::vector<DocLogEntry> log;
  bool halted = false;
  std::string halted_doc;
  std::string halt_reason;

  LmParams params() const { return {config, theta}; }
};

inline StreamRun start_run(const LmParams& base, const AdaptConfig& cfg) {
  cfg.validate();
  StreamRun run;
  run.config = base.config;
  run.theta = base.tensors.detached();
  run.adam = AdamState::fresh(run.theta, cfg.adam);
  run.checkpoints.push_back({0, run.theta});
  return run;
}

namespace detail {

inline double grad_norm(const GradientMap& g) { return std::sqrt(squared_norm(g)); }

}  // namespace detail

/// Processes `docs` in order, continuing from the run's current state.
/// A non-finite loss, gradient or update halts the run; state up to the
/// failing document is kept.
inline void continue_run(StreamRun& run, const std::vector<Document>& docs, const Weighter& weighter,
                         const AdaptConfig& cfg) {
  cfg.validate();
  for (const auto& doc : docs) {
    if (run.halted) return;
    DocLogEntry entry{doc.id, run.docs_done};
    try {
      TokenWeights w = weighter(doc);
      if (w.size() != doc.tokens.size()) {
        throw std::invalid_argument("weighter returned " + std::to_string(w.size()) + " weights for " +
                                    std::to_string(doc.tokens.size()) + " tokens of " + doc.id);
      }
      if (!cfg.persist_optimizer) run.adam = AdamState::fresh(run.theta, run.adam.config);
      for (std::size_t s = 0; s < cfg.steps_per_doc; ++s) {
        Tape tape;
        LmParams p{run.config, run.theta.watched(tape)};
        Tensor loss = weighted_nll(p, doc.tokens, w);
        GradientMap g = backward(loss, p.tensors);
        if (s == 0) {
          entry.loss = loss.item();
          entry.grad_norm = detail::grad_norm(g);
          if (!std::isfinite(entry.grad_norm)) throw NumericError("non-finite gradient norm");
          if (cfg.log_raw_grad_norm) {
            Tape t2;
            LmParams p2{run.config, run.theta.watched(t2)};
            Tensor raw = weighted_nll(p2, doc.tokens, uniform_weights(doc.tokens));
            entry.raw_grad_norm = detail::grad_norm(backward(raw, p2.tensors));
          }
        }
        run.theta = adam_step(run.theta, g, run.adam);
        ++run.step;
      }
    } catch (const NumericError& e) {
      run.halted = true;
      run.halted_doc = doc.id;
      run.halt_reason = e.what();
      return;
    }
    run.log.push_back(std::move(entry));
    ++run.docs_done;
    if (run.docs_done % cfg.checkpoint_every == 0) run.checkpoints.push_back({run.docs_done, run.theta});
  }
}

/// Adds the final-step checkpoint when it is not already a multiple of M.
inline void finish_run(StreamRun& run) {
  if (run.checkpoints.empty() || run.checkpoints.back().docs != run.docs_done) {
    run.checkpoints.push_back({run.docs_done, run.theta});
  }
}

inline StreamRun adapt_stream(const LmParams& base, const std::vector<Document>& docs, const Weighter& weighter,
                              const AdaptConfig& cfg) {
  StreamRun run = start_run(base, cfg);
  continue_run(run, docs, weighter, cfg);
  finish_run(run);
  return run;
}

/// Serializes everything needed to resume: parameters, Adam moments and counters.
inline void save_run_state(const StreamRun& run, const std::filesystem::path& path) {
  NamedTensors out;
  for (std::size_t i = 0; i < run.theta.size(); ++i) {
    out.insert("theta/" + run.theta.name(i), run.theta.at(i));
    out.insert("m/" + run.theta.name(i), run.adam.m.at(run.theta.name(i)));
    out.insert("v/" + run.theta.name(i), run.adam.v.at(run.theta.name(i)));
  }
  out.insert("counters", Tensor::vector({double(run.step), double(run.docs_done), double(run.adam.step)}));
  save_params(path, out);
}

inline StreamRun load_run_state(const std::filesystem::path& path, const LmConfig& config, const AdaptConfig& cfg) {
  NamedTensors in = load_params(path);
  StreamRun run;
  run.config = config;
  NamedTensors theta, m, v;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto& n = in.name(i);
    if (n.starts_with("theta/")) theta.insert(n.substr(6), in.at(i));
    else if (n.starts_with("m/")) m.insert(n.substr(2), in.at(i));
    else if (n.starts_with("v/")) v.insert(n.substr(2), in.at(i));
  }
  const Tensor& c = in.at("counters");
  run.theta = std::move(theta);
  run.adam = AdamState{cfg.adam, std::move(m), std::move(v), static_cast<long>(c[2])};
  run.step = static_cast<std::size_t>(c[0]);
  run.docs_done = static_cast<std::size_t>(c[1]);
  run.checkpoints.push_back({run.docs_done, run.theta});
  return run;
}

struct GradientNormProfile {
  std::vector<double> raw;       // |grad NLL_t|
  std::vector<double> weighted;  // |grad (a_t NLL_t / T)|
};

/// Per-position gradient norms from one recorded forward pass. The weighted
/// norm is computed by its own backward pass and checked against a_t/T * raw.
inline GradientNormProfile gradient_norm_profile(const LmParams& theta, const TokenSequence& x, const TokenWeights& w) {
  if (w.size() != x.size()) throw std::invalid_argument("gradient_norm_profile: weight/token length mismatch");
  Tape tape;
  LmParams p = theta.watched(tape);
  Tensor nll = token_nll(p, x);
  const double T = double(x.size());
  GradientNormProfile out;
  for (std::size_t t = 0; t < x.size(); ++t) {
    Tensor nt = pick(reshape(nll, {1, x.size()}), {t});
    Tensor one = sum(nt);
    const double raw = detail::grad_norm(backward(one, p.tensors));
    const double weighted = detail::grad_norm(backward(scale(one, w[t] / T), p.tensors));
    const double expect = w[t] / T * raw;
    if (std::abs(weighted - expect) > 1e-10 * std::max(1.0, raw)) {
      throw std::logic_error("gradient_norm_profile: weighted norm " + std::to_string(weighted) +
                             " differs from a_t/T * raw " + std::to_string(expect) + " at position " +
                             std::to_string(t));
    }
    out.raw.push_back(raw);
    out.weighted.push_back(weighted);
  }
  return out;
}

}  // namespace camels

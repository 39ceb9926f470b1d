#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "camels/adapt/analysis.hpp"
#include "camels/data/dataset.hpp"
#include "camels/eval/sweep.hpp"
#include "camels/meta/trainer.hpp"
#include "camels/pipeline/config.hpp"

namespace camels {

namespace fs = std::filesystem;

/// One run directory plus the resolved configuration every stage reads.
struct RunContext {
  fs::path out;
  RunConfig cfg;
  std::size_t jobs = 1;
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

inline const std::vector<std::string>& weighting_methods() {
  static const std::vector<std::string> v = {"uniform", "tfidf",        "salient", "camels",
                                             "pos_mean", "pos_resample", "bimodal"};
  return v;
}

inline bool uses_learned_weights(const std::string& method) {
  return method == "camels" || method == "pos_mean" || method == "pos_resample" || method == "bimodal";
}

namespace pipeline {

inline void require(const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError("missing input: " + p.string());
}

inline void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

inline std::string read_text(const fs::path& p) {
  require(p);
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Creates the run directory and pins its configuration. A directory made
/// with a different configuration is refused rather than mixed.
inline void open_run(const RunContext& ctx) {
  fs::create_directories(ctx.out);
  const fs::path p = ctx.out / "config.txt";
  const std::string text = ctx.cfg.text();
  if (fs::exists(p)) {
    if (read_text(p) != text) {
      throw ConfigError("run directory " + ctx.out.string() + " was created with a different configuration (" +
                        p.string() + ")");
    }
    return;
  }
  write_text(p, text);
}

inline DataSpec data_spec(const RunConfig& c) {
  DataSpec s;
  s.seed = c.integer("seed");
  s.world.n_entities = c.integer("data.entities");
  s.world.cities = c.integer("data.cities");
  s.world.companies = c.integer("data.companies");
  s.world.occupations = c.integer("data.occupations");
  s.world.items = c.integer("data.items");
  s.world.drift_fraction = c.real("data.drift_fraction");
  s.docs_per_style = c.integer("data.docs_per_style");
  s.locality_docs = c.integer("data.locality_docs");
  s.temporal_style = c.str("data.temporal_style");
  s.mention_rate = c.real("data.mention_rate");
  return s;
}

inline LmConfig lm_config(const RunConfig& c, std::size_t vocab_size) {
  LmConfig m;
  m.d_model = c.integer("model.width");
  m.n_layer = c.integer("model.layers");
  m.n_head = c.integer("model.heads");
  m.d_ff = c.integer("model.ff");
  m.n_ctx = c.integer("model.ctx");
  m.vocab_size = vocab_size;
  m.seed = c.integer("seed");
  m.validate();
  return m;
}

inline MetaConfig meta_config(const RunConfig& c) {
  MetaConfig m;
  m.inner_lr = c.real("meta.inner_lr");
  m.outer_lr = c.real("meta.outer_lr");
  m.c_loc = c.real("meta.c_loc");
  m.c_reset = c.integer("meta.c_reset");
  m.k = c.integer("meta.k");
  m.accumulation = c.integer("meta.accumulation");
  m.micro_batch = c.integer("meta.micro_batch");
  m.episodes = c.integer("meta.episodes");
  m.seed = c.integer("seed") + 404;
  return m;
}

inline AdaptConfig adapt_config(const RunConfig& c) {
  AdaptConfig a;
  a.steps_per_doc = c.integer("adapt.steps_per_doc");
  a.checkpoint_every = c.integer("adapt.checkpoint_every");
  a.persist_optimizer = c.flag("adapt.persist_optimizer");
  return a;
}

inline Corpus load_run_corpus(const RunContext& ctx) {
  require(ctx.out / "data" / "vocab.txt");
  return load_corpus(ctx.out / "data");
}

inline const DatasetSplits& style_splits(const Corpus& c, const std::string& style) {
  auto it = c.styles.find(style);
  if (it == c.styles.end()) throw ConfigError("style " + style + " is not in the dataset");
  return it->second;
}

inline LmParams load_model(const RunContext& ctx, const Corpus& c, const std::string& name) {
  const fs::path p = ctx.out / "models" / (name + ".bin");
  require(p);
  return {lm_config(ctx.cfg, c.vocab.size()), load_params(p)};
}

inline fs::path phi_path(const RunContext& ctx, const std::string& style, const std::string& tag) {
  return ctx.out / "models" / ("phi_" + style + tag + ".bin");
}

inline WeightModelParams load_phi(const RunContext& ctx, const Corpus& c, const std::string& style,
                                  const std::string& tag) {
  const fs::path p = phi_path(ctx, style, tag);
  require(p);
  WeightModelParams phi = init_weight_model(lm_config(ctx.cfg, c.vocab.size()), ctx.cfg.integer("weight.hidden"));
  NamedTensors t = load_params(p);
  if (t.size() != phi.tensors.size()) throw ConfigError(p.string() + " does not match the configured weight model");
  phi.tensors = std::move(t);
  return phi;
}

/// First n triples of `split` after a seeded shuffle.
inline std::vector<DocumentTriple> shuffled_prefix(std::vector<DocumentTriple> split, std::size_t n,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(split.begin(), split.end(), rng);
  if (n > split.size()) {
    throw ConfigError("stream of " + std::to_string(n) + " documents requested from a split of " +
                      std::to_string(split.size()));
  }
  split.resize(n);
  return split;
}

inline StreamTask sweep_stream(const RunContext& ctx, const Corpus& c) {
  const auto& s = style_splits(c, ctx.cfg.str("eval.style"));
  return make_stream_task(shuffled_prefix(s.valid, ctx.cfg.integer("eval.sweep_len"), ctx.cfg.integer("seed") + 500),
                          c.vocab);
}

inline std::vector<StreamTask> test_streams(const RunContext& ctx, const Corpus& c, const std::string& style) {
  std::vector<StreamTask> out;
  const auto& s = style_splits(c, style);
  for (std::size_t k = 0; k < ctx.cfg.integer("eval.streams"); ++k)
    out.push_back(
        make_stream_task(shuffled_prefix(s.test, ctx.cfg.integer("eval.stream_len"), ctx.cfg.integer("seed") + 1000 + k),
                         c.vocab));
  return out;
}

inline std::vector<DocumentTriple> unrelated_queries(const RunContext& ctx, const Corpus& c) {
  const auto& v = style_splits(c, ctx.cfg.str("eval.style")).qa_valid;
  return {v.begin(), v.begin() + std::min<std::size_t>(v.size(), ctx.cfg.integer("eval.unrelated"))};
}

inline std::vector<TokenSequence> locality_eval_sequences(const RunContext& ctx, const Corpus& c) {
  std::vector<TokenSequence> out;
  const std::size_t n = std::min<std::size_t>(c.locality_eval.size(), ctx.cfg.integer("eval.locality_docs"));
  for (std::size_t i = 0; i < n; ++i) out.push_back(tokenize(c.locality_eval[i].text, c.vocab));
  return out;
}

inline std::uint64_t id_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pipeline

// ---------------------------------------------------------------- weighters

/// Everything the weighting methods draw on. Learned-weight methods need the
/// weight model; the POS ablations and the bimodal rounding also need the
/// reference distribution of its weights over the meta-training documents.
struct WeighterKit {
  std::shared_ptr<const TfIdf> tfidf;
  std::shared_ptr<const WeightModelParams> phi;
  std::shared_ptr<const WeightReference> reference;
  std::uint64_t seed = 0;
};

inline WeightReference build_weight_reference(const WeightModelParams& phi, const std::vector<Document>& docs) {
  WeightReference ref;
  for (const auto& d : docs) ref.add(pos_tags(d), learned_weights(phi, d.tokens));
  ref.finalize();
  return ref;
}

inline WeighterKit make_weighter_kit(const RunContext& ctx, const Corpus& c, bool learned, const std::string& tag) {
  WeighterKit kit;
  kit.seed = ctx.cfg.integer("seed");
  const auto& meta_split = pipeline::style_splits(c, ctx.cfg.str("meta.style")).train;
  std::vector<std::vector<std::string>> words;
  std::vector<Document> docs;
  for (const auto& t : meta_split) {
    docs.push_back(make_document(t.id, t.text, t.categories, c.vocab, t.time));
    words.push_back(docs.back().words);
  }
  kit.tfidf = std::make_shared<TfIdf>(words, ctx.cfg.real("tfidf.cutoff"));
  if (learned) {
    kit.phi = std::make_shared<WeightModelParams>(pipeline::load_phi(ctx, c, ctx.cfg.str("meta.style"), tag));
    kit.reference = std::make_shared<WeightReference>(build_weight_reference(*kit.phi, docs));
  }
  return kit;
}

inline Weighter make_weighter(const std::string& method, const WeighterKit& kit) {
  auto need_phi = [&] {
    if (!kit.phi) throw ConfigError("method " + method + " needs a trained weight model");
  };
  if (method == "uniform") return [](const Document& d) { return uniform_weights(d.tokens); };
  if (method == "tfidf") return [t = kit.tfidf](const Document& d) { return t->weights(d); };
  if (method == "salient") return [](const Document& d) { return salient_span_weights(d); };
  need_phi();
  if (method == "camels") return learned_weighter(*kit.phi);
  if (method == "pos_mean")
    return [r = kit.reference](const Document& d) { return pos_mean_weights(*r, pos_tags(d)); };
  if (method == "pos_resample")
    return [r = kit.reference, seed = kit.seed](const Document& d) {
      return pos_resample_weights(*r, pos_tags(d), seed ^ pipeline::id_hash(d.id));
    };
  if (method == "bimodal")
    return [r = kit.reference, p = kit.phi](const Document& d) {
      return bimodal_round_weights(*r, learned_weights(*p, d.tokens));
    };
  throw ConfigError("unknown weighting method \"" + method + "\"");
}

inline std::vector<std::string> check_methods(std::vector<std::string> methods) {
  if (methods.empty()) return weighting_methods();
  for (const auto& m : methods)
    if (std::find(weighting_methods().begin(), weighting_methods().end(), m) == weighting_methods().end())
      throw ConfigError("unknown weighting method \"" + m + "\"");
  return methods;
}

// ------------------------------------------------------------------- stages

inline Corpus gen_data_stage(const RunContext& ctx) {
  pipeline::open_run(ctx);
  Corpus c;
  try {
    c = build_corpus(pipeline::data_spec(ctx.cfg));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  save_corpus(c, ctx.out / "data");
  nlohmann::json summary;
  for (const auto& [style, s] : c.styles)
    for (std::size_t k = 0; k < 5; ++k) summary["splits"][style][DatasetSplits::names()[k]] = s.at(k).size();
  summary["vocab_size"] = c.vocab.size();
  summary["locality_train"] = c.locality_train.size();
  summary["locality_eval"] = c.locality_eval.size();
  pipeline::write_json(ctx.out / "data" / "summary.json", summary);
  ctx.log("gen-data: vocabulary " + std::to_string(c.vocab.size()));
  return c;
}

/// Language-model pretraining on the QA-train/QA-valid documents of every
/// style plus the training locality text, then QA tuning on QA-train pairs.
/// The proxy used in meta-training is a shorter, separate run of the same recipe.
inline void qa_tune_stage(const RunContext& ctx) {
  pipeline::open_run(ctx);
  const Corpus c = pipeline::load_run_corpus(ctx);
  const auto& cfg = ctx.cfg;
  std::vector<PretrainItem> items;
  std::vector<QaPair> qa;
  for (const auto& [style, s] : c.styles) {
    for (const auto* part : {&s.qa_train, &s.qa_valid})
      for (const auto& t : *part) items.push_back({tokenize(t.text, c.vocab), std::nullopt});
    for (const auto& t : s.qa_train) {
      QaPair p{tokenize(t.question, c.vocab), tokenize(t.answer, c.vocab)};
      qa.push_back(p);
      items.push_back({{}, p});
    }
  }
  for (const auto& t : c.locality_train) items.push_back({tokenize(t.text, c.vocab), std::nullopt});

  const LmConfig lm = pipeline::lm_config(cfg, c.vocab.size());
  const std::uint64_t seed = cfg.integer("seed");
  nlohmann::json log = nlohmann::json::array();
  auto train = [&](const std::string& name, std::size_t epochs, double lr) {
    auto note = [&](const char* phase) {
      return [&, phase](std::size_t ep, double loss) {
        log.push_back({{"model", name}, {"phase", phase}, {"epoch", ep}, {"loss", loss}});
        if (!std::isfinite(loss)) throw NumericError(name + " " + phase + " loss is not finite at epoch " + std::to_string(ep));
        ctx.log("qa-tune: " + name + " " + phase + " epoch " + std::to_string(ep) + " loss " + pipeline::num(loss));
      };
    };
    LmParams theta = init_lm(lm);
    theta = pretrain_lm(std::move(theta), items, {epochs, lr, seed + 1}, note("pretrain"));
    theta = qa_tune(std::move(theta), qa, {cfg.integer("qa.epochs"), cfg.real("qa.lr"), seed + 2}, note("qa"));
    save_params(ctx.out / "models" / (name + ".bin"), theta.tensors);
    return theta;
  };
  fs::create_directories(ctx.out / "models");
  train("proxy", cfg.integer("pretrain.proxy_epochs"), cfg.real("pretrain.proxy_lr"));
  LmParams base = train("base", cfg.integer("pretrain.epochs"), cfg.real("pretrain.lr"));

  nlohmann::json report = {{"log", log}};
  const std::size_t n = cfg.integer("eval.unrelated");
  const auto& s = pipeline::style_splits(c, cfg.str("eval.style"));
  for (const auto* part : {&s.qa_train, &s.qa_valid, &s.test}) {
    std::vector<DocumentTriple> q(part->begin(), part->begin() + std::min(n, part->size()));
    const char* name = part == &s.qa_train ? "qa_train" : part == &s.qa_valid ? "qa_valid" : "test";
    report["base_f1"][name] = evaluate_queries(base, q, c.vocab, cfg.integer("eval.max_answer_len")).mean_f1();
  }
  pipeline::write_json(ctx.out / "models" / "qa_tune.json", report);
}

/// Meta-trains the weight model on `style`'s train split. The trunk starts
/// from the proxy's parameters. `tag` names the output for variant runs.
inline MetaTrainState meta_train_stage(const RunContext& ctx, const std::string& style,
                                       std::optional<double> c_loc = std::nullopt, const std::string& tag = "") {
  pipeline::open_run(ctx);
  const Corpus c = pipeline::load_run_corpus(ctx);
  const LmParams proxy = pipeline::load_model(ctx, c, "proxy");
  MetaConfig mc = pipeline::meta_config(ctx.cfg);
  if (c_loc) mc.c_loc = *c_loc;
  try {
    mc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  WeightModelParams phi = init_weight_model(proxy.config, ctx.cfg.integer("weight.hidden"));
  NamedTensors init;
  for (std::size_t i = 0; i < phi.tensors.size(); ++i) {
    const auto& n = phi.tensors.name(i);
    init.insert(n, proxy.tensors.contains(n) ? proxy.tensors.at(n) : phi.tensors.at(i));
  }
  phi.tensors = std::move(init);

  std::vector<MetaExample> train;
  for (const auto& t : pipeline::style_splits(c, style).train)
    train.push_back({make_document(t.id, t.text, t.categories, c.vocab, t.time), tokenize(t.question, c.vocab),
                     tokenize(t.answer, c.vocab)});
  std::vector<TokenSequence> loc;
  for (const auto& t : c.locality_train) loc.push_back(tokenize(t.text, c.vocab));

  MetaTrainState state = start_meta_training(phi, proxy, mc);
  const fs::path log_path = ctx.out / "models" / ("meta_log_" + style + tag + ".jsonl");
  std::ofstream log(log_path, std::ios::binary);
  try {
    meta_train(state, train, loc, mc, [&](const EpisodeRecord& r) {
      log << to_json(r).dump() << "\n";
      if (r.episode % 20 == 0) ctx.log("meta-train " + style + tag + ": episode " + std::to_string(r.episode) +
                                       " outer loss " + pipeline::num(r.outer_loss));
    });
  } catch (const NumericError& e) {
    pipeline::write_json(ctx.out / "diagnostics.json",
                         {{"stage", "meta-train"}, {"style", style}, {"episode", state.episode}, {"error", e.what()}});
    throw;
  }
  save_params(pipeline::phi_path(ctx, style, tag), state.phi.tensors);

  std::vector<Document> valid;
  for (const auto& t : pipeline::style_splits(c, style).valid)
    valid.push_back(make_document(t.id, t.text, t.categories, c.vocab, t.time));
  pipeline::write_json(ctx.out / "models" / ("phi_" + style + tag + ".json"),
                       {{"style", style},
                        {"c_loc", mc.c_loc},
                        {"episodes", state.episode},
                        {"valid_mean_weight_by_category", mean_weight_by_category(state.phi, valid)}});
  return state;
}

inline nlohmann::json to_json(const SweepResult& r, const std::string& method, std::uint64_t hash) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : r.arms) arms.push_back({{"lr", a.lr}, {"f1", a.f1}, {"diverged", a.diverged}, {"note", a.note}});
  return {{"method", method},       {"arms", arms},           {"selected_lr", r.selected_lr},
          {"selected_f1", r.selected_f1}, {"stream_hash", hash}};
}

/// Learning-rate sweep per method on the validation stream of the eval style.
inline std::map<std::string, SweepResult> sweep_stage(const RunContext& ctx, std::vector<std::string> methods = {},
                                                      const std::string& tag = "") {
  pipeline::open_run(ctx);
  methods = check_methods(std::move(methods));
  const Corpus c = pipeline::load_run_corpus(ctx);
  const LmParams base = pipeline::load_model(ctx, c, "base");
  const bool learned = std::any_of(methods.begin(), methods.end(), uses_learned_weights);
  const WeighterKit kit = make_weighter_kit(ctx, c, learned, tag);
  const StreamTask task = pipeline::sweep_stream(ctx, c);
  std::map<std::string, SweepResult> out;
  for (const auto& m : methods) {
    const std::string name = m + (uses_learned_weights(m) ? tag : "");
    SweepResult r = lr_sweep(base, make_weighter(m, kit), task, c.vocab, ctx.cfg.reals("adapt.grid"),
                             pipeline::adapt_config(ctx.cfg), ctx.jobs);
    pipeline::write_json(ctx.out / "sweep" / (name + ".json"), to_json(r, name, stream_hash(task.docs)));
    ctx.log("sweep: " + name + " selected lr " + pipeline::num(r.selected_lr) + " F1 " + pipeline::num(r.selected_f1));
    out[name] = std::move(r);
  }
  return out;
}

inline double selected_lr(const RunContext& ctx, const std::string& name) {
  return pipeline::read_json(ctx.out / "sweep" / (name + ".json")).at("selected_lr").get<double>();
}

/// Scores of one method over the seeded test streams, with forgetting on
/// unrelated queries and drift on held-out locality text.
struct MethodEval {
  std::string method;
  double lr = 0.0;
  ScoreReport scores;
  std::vector<double> unrelated_base;      // per seed
  std::vector<double> unrelated_adapted;   // per seed
  std::vector<double> locality_kl;         // per seed, mean over documents
  double unrelated_change = 0.0, se_unrelated_change = 0.0;
  double mean_locality_kl = 0.0, se_locality_kl = 0.0;
};

inline nlohmann::json to_json(const MethodEval& e) {
  const auto& s = e.scores;
  nlohmann::json seeds = nlohmann::json::array();
  for (std::size_t k = 0; k < s.adapted_f1.size(); ++k)
    seeds.push_back({{"stream_hash", s.stream_hashes[k]},
                     {"base_f1", s.base_f1[k]},
                     {"adapted_f1", s.adapted_f1[k]},
                     {"unrelated_base_f1", e.unrelated_base[k]},
                     {"unrelated_adapted_f1", e.unrelated_adapted[k]},
                     {"locality_kl", e.locality_kl[k]}});
  return {{"method", e.method},
          {"lr", e.lr},
          {"mean_base", s.mean_base},
          {"mean_adapted", s.mean_adapted},
          {"abs_change", s.abs_change},
          {"rel_change", s.rel_change},
          {"se_adapted", s.se_adapted},
          {"se_change", s.se_change},
          {"unrelated_change", e.unrelated_change},
          {"se_unrelated_change", e.se_unrelated_change},
          {"locality_kl", e.mean_locality_kl},
          {"se_locality_kl", e.se_locality_kl},
          {"seeds", seeds}};
}

inline std::map<std::string, MethodEval> eval_stage(const RunContext& ctx, std::vector<std::string> methods = {},
                                                    const std::string& tag = "") {
  pipeline::open_run(ctx);
  methods = check_methods(std::move(methods));
  const Corpus c = pipeline::load_run_corpus(ctx);
  const LmParams base = pipeline::load_model(ctx, c, "base");
  const bool learned = std::any_of(methods.begin(), methods.end(), uses_learned_weights);
  const WeighterKit kit = make_weighter_kit(ctx, c, learned, tag);
  const auto streams = pipeline::test_streams(ctx, c, ctx.cfg.str("eval.style"));
  const auto unrelated = pipeline::unrelated_queries(ctx, c);
  const auto loc = pipeline::locality_eval_sequences(ctx, c);
  const std::size_t max_len = ctx.cfg.integer("eval.max_answer_len");
  const double unrelated_base = evaluate_queries(base, unrelated, c.vocab, max_len).mean_f1();
  std::vector<double> stream_base;
  for (const auto& s : streams) stream_base.push_back(evaluate_queries(base, s.queries, c.vocab, max_len).mean_f1());

  std::map<std::string, MethodEval> out;
  for (const auto& m : methods) {
    MethodEval e;
    e.method = m + (uses_learned_weights(m) ? tag : "");
    e.lr = selected_lr(ctx, e.method);
    AdaptConfig ac = pipeline::adapt_config(ctx.cfg);
    ac.adam.lr = e.lr;
    ac.checkpoint_every = std::max<std::size_t>(1, ctx.cfg.integer("eval.stream_len"));
    const Weighter w = make_weighter(m, kit);
    std::vector<QueryScores> adapted;
    std::vector<std::uint64_t> hashes;
    std::vector<double> change;
    for (std::size_t k = 0; k < streams.size(); ++k) {
      StreamRun run = adapt_stream(base, streams[k].docs, w, ac);
      if (run.halted) {
        pipeline::write_json(ctx.out / "diagnostics.json", {{"stage", "eval"},
                                                            {"method", e.method},
                                                            {"stream", k},
                                                            {"document", run.halted_doc},
                                                            {"error", run.halt_reason}});
        throw NumericError("eval: " + e.method + " halted on " + run.halted_doc + ": " + run.halt_reason);
      }
      const LmParams p = run.params();
      adapted.push_back(evaluate_queries(p, streams[k].queries, c.vocab, max_len));
      hashes.push_back(stream_hash(streams[k].docs));
      e.unrelated_base.push_back(unrelated_base);
      e.unrelated_adapted.push_back(evaluate_queries(p, unrelated, c.vocab, max_len).mean_f1());
      change.push_back(e.unrelated_adapted.back() - unrelated_base);
      double kl = 0.0;
      for (const auto& x : loc) kl += locality_loss(base, p, x).item();
      e.locality_kl.push_back(loc.empty() ? 0.0 : kl / double(loc.size()));
    }
    e.scores = make_score_report(stream_base, std::move(adapted), std::move(hashes));
    e.unrelated_change = mean_of(change);
    e.se_unrelated_change = standard_error(change);
    e.mean_locality_kl = mean_of(e.locality_kl);
    e.se_locality_kl = standard_error(e.locality_kl);
    pipeline::write_json(ctx.out / "eval" / (e.method + ".json"), to_json(e));
    ctx.log("eval: " + e.method + " F1 " + pipeline::num(e.scores.mean_base) + " -> " +
            pipeline::num(e.scores.mean_adapted));
    out[e.method] = std::move(e);
  }

  // Summary over every method evaluated in this run directory so far.
  nlohmann::json report = nlohmann::json::object();
  std::string csv =
      "method,lr,mean_base,mean_adapted,abs_change,rel_change,se_adapted,se_change,unrelated_change,locality_kl\n";
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(ctx.out / "eval"))
    if (f.path().extension() == ".json" && f.path().filename() != "report.json") files.push_back(f.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto j = pipeline::read_json(f);
    report[j.at("method").get<std::string>()] = j;
    csv += j.at("method").get<std::string>();
    for (const char* k : {"lr", "mean_base", "mean_adapted", "abs_change", "rel_change", "se_adapted", "se_change",
                          "unrelated_change", "locality_kl"})
      csv += "," + (j.at(k).is_null() ? std::string("nan") : pipeline::num(j.at(k).get<double>()));
    csv += "\n";
  }
  pipeline::write_json(ctx.out / "eval" / "report.json", report);
  pipeline::write_text(ctx.out / "eval" / "report.csv", csv);
  return out;
}

/// One adaptation run kept on disk: per-document log, checkpoint curve, final state.
/// `stream` is "valid" (the sweep stream) or "test" (the first test stream).
inline CurvePoint adapt_stage(const RunContext& ctx, const std::string& method, const std::string& stream = "test",
                              std::optional<double> lr = std::nullopt, const std::string& tag = "") {
  pipeline::open_run(ctx);
  check_methods({method});
  if (stream != "valid" && stream != "test") throw ConfigError("stream must be valid or test, got " + stream);
  const Corpus c = pipeline::load_run_corpus(ctx);
  const LmParams base = pipeline::load_model(ctx, c, "base");
  const WeighterKit kit = make_weighter_kit(ctx, c, uses_learned_weights(method), tag);
  const std::string name = method + (uses_learned_weights(method) ? tag : "");
  const StreamTask task =
      stream == "valid" ? pipeline::sweep_stream(ctx, c) : pipeline::test_streams(ctx, c, ctx.cfg.str("eval.style"))[0];
  AdaptConfig ac = pipeline::adapt_config(ctx.cfg);
  ac.adam.lr = lr ? *lr : selected_lr(ctx, name);
  ac.log_raw_grad_norm = true;
  const fs::path dir = ctx.out / "adapt" / (name + "_" + stream);
  StreamRun run = adapt_stream(base, task.docs, make_weighter(method, kit), ac);
  if (run.halted) {
    pipeline::write_json(ctx.out / "diagnostics.json",
                         {{"stage", "adapt"}, {"method", name}, {"document", run.halted_doc}, {"error", run.halt_reason}});
    throw NumericError("adapt: " + name + " halted on " + run.halted_doc + ": " + run.halt_reason);
  }
  const std::size_t max_len = ctx.cfg.integer("eval.max_answer_len");
  auto curve = checkpoint_eval(run, task.queries, pipeline::unrelated_queries(ctx, c), c.vocab, max_len);
  fs::create_directories(dir);
  std::ostringstream cs;
  write_curve_csv(cs, curve);
  pipeline::write_text(dir / "curve.csv", cs.str());
  std::string log = "doc_id,position,loss,grad_norm,raw_grad_norm\n";
  for (const auto& e : run.log)
    log += e.doc_id + "," + std::to_string(e.position) + "," + pipeline::num(e.loss) + "," + pipeline::num(e.grad_norm) +
           "," + pipeline::num(e.raw_grad_norm) + "\n";
  pipeline::write_text(dir / "doc_log.csv", log);
  save_run_state(run, dir / "state.bin");
  pipeline::write_json(dir / "scores.json", {{"method", name},
                                             {"stream", stream},
                                             {"lr", ac.adam.lr},
                                             {"stream_hash", stream_hash(task.docs)},
                                             {"base_f1", curve.front().f1_all},
                                             {"adapted_f1", curve.back().f1_all},
                                             {"unrelated_base_f1", curve.front().f1_unrelated},
                                             {"unrelated_adapted_f1", curve.back().f1_unrelated}});
  ctx.log("adapt: " + name + " F1 " + pipeline::num(curve.front().f1_all) + " -> " + pipeline::num(curve.back().f1_all));
  return curve.back();
}

/// Every (train style, test style) cell, each weight model at the rate swept for the learned method.
inline TransferMatrix transfer_stage(const RunContext& ctx) {
  pipeline::open_run(ctx);
  const Corpus c = pipeline::load_run_corpus(ctx);
  const LmParams base = pipeline::load_model(ctx, c, "base");
  const double lr = selected_lr(ctx, "camels");
  std::vector<std::string> styles;
  std::map<std::string, WeightModelParams> phis;
  std::map<std::string, std::vector<StreamTask>> streams;
  std::map<std::string, double> rates;
  for (const auto& [s, _] : c.styles) {
    styles.push_back(s);
    if (fs::exists(pipeline::phi_path(ctx, s, ""))) phis.emplace(s, pipeline::load_phi(ctx, c, s, ""));
    streams[s] = pipeline::test_streams(ctx, c, s);
    rates[s] = lr;
  }
  TransferMatrix m;
  try {
    m = transfer_matrix(base, styles, phis, streams, rates, c.vocab, pipeline::adapt_config(ctx.cfg));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(e.what()) + " (expected " + pipeline::phi_path(ctx, "<style>", "").string() + ")");
  }
  nlohmann::json j = nlohmann::json::object();
  std::string csv = "train\\test";
  for (const auto& te : styles) csv += "," + te;
  csv += "\n";
  for (const auto& tr : styles) {
    csv += tr;
    for (const auto& te : styles) {
      const auto& r = m.at({tr, te});
      csv += "," + pipeline::num(r.mean_adapted);
      j[tr][te] = {{"mean_base", r.mean_base},   {"mean_adapted", r.mean_adapted}, {"abs_change", r.abs_change},
                   {"se_adapted", r.se_adapted}, {"adapted_f1", r.adapted_f1},     {"stream_hashes", r.stream_hashes}};
    }
    csv += "\n";
  }
  pipeline::write_text(ctx.out / "transfer" / "matrix.csv", csv);
  pipeline::write_json(ctx.out / "transfer" / "matrix.json", j);
  return m;
}

struct AnalysisResult {
  WeightStats learned_stats;
  std::map<std::string, TimeSinceDoc> time_since_doc;  // per method, pooled over test streams
  std::map<std::string, std::vector<CurvePoint>> pooled_curve;
};

/// Token-weight dumps, weight histograms and per-category statistics on the
/// validation documents; forgetting curves and time-since-document curves on
/// the test streams for the uniform and learned methods.
inline AnalysisResult analyze_stage(const RunContext& ctx, const std::string& tag = "") {
  pipeline::open_run(ctx);
  const Corpus c = pipeline::load_run_corpus(ctx);
  const LmParams base = pipeline::load_model(ctx, c, "base");
  const WeighterKit kit = make_weighter_kit(ctx, c, true, tag);
  const fs::path dir = ctx.out / "analyze";
  fs::create_directories(dir);
  AnalysisResult res;

  std::vector<Document> valid;
  for (const auto& t : pipeline::style_splits(c, ctx.cfg.str("eval.style")).valid)
    valid.push_back(make_document(t.id, t.text, t.categories, c.vocab, t.time));
  for (const std::string m : {"camels", "tfidf", "salient", "bimodal"}) {
    const Weighter w = make_weighter(m, kit);
    std::ostringstream os;
    for (std::size_t i = 0; i < std::min<std::size_t>(valid.size(), ctx.cfg.integer("analyze.dump_docs")); ++i)
      write_weight_csv(os, valid[i], c.vocab, w(valid[i]), i == 0);
    pipeline::write_text(dir / ("token_weights_" + m + tag + ".csv"), os.str());
  }
  std::vector<double> ws;
  std::vector<std::string> cats;
  for (const auto& d : valid) {
    const TokenWeights w = learned_weights(*kit.phi, d.tokens);
    ws.insert(ws.end(), w.values.begin(), w.values.end());
    cats.insert(cats.end(), d.tokens.categories.begin(), d.tokens.categories.end());
  }
  res.learned_stats = weight_stats(ws, cats);
  std::string hist = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < res.learned_stats.counts.size(); ++b)
    hist += pipeline::num(res.learned_stats.edges[b]) + "," + pipeline::num(res.learned_stats.edges[b + 1]) + "," +
            std::to_string(res.learned_stats.counts[b]) + "\n";
  pipeline::write_text(dir / ("weight_histogram" + tag + ".csv"), hist);
  std::string catcsv = "category,count,mean,variance\n";
  for (const auto& [k, s] : res.learned_stats.by_category)
    catcsv += k + "," + std::to_string(s.count) + "," + pipeline::num(s.mean) + "," + pipeline::num(s.variance) + "\n";
  pipeline::write_text(dir / ("category_weights" + tag + ".csv"), catcsv);

  const auto streams = pipeline::test_streams(ctx, c, ctx.cfg.str("eval.style"));
  const auto unrelated = pipeline::unrelated_queries(ctx, c);
  const std::size_t max_len = ctx.cfg.integer("eval.max_answer_len");
  for (const std::string m : {"uniform", "camels"}) {
    const std::string name = m + (uses_learned_weights(m) ? tag : "");
    AdaptConfig ac = pipeline::adapt_config(ctx.cfg);
    ac.adam.lr = selected_lr(ctx, name);
    ac.checkpoint_every = ctx.cfg.integer("analyze.checkpoint_every");
    const Weighter w = make_weighter(m, kit);
    // Streams share one checkpoint schedule, so their queries pool into one set.
    std::vector<CurvePoint> pooled;
    std::vector<std::optional<std::size_t>> position;
    for (std::size_t k = 0; k < streams.size(); ++k) {
      StreamRun run = adapt_stream(base, streams[k].docs, w, ac);
      if (run.halted) throw NumericError("analyze: " + name + " halted on " + run.halted_doc + ": " + run.halt_reason);
      auto curve = checkpoint_eval(run, streams[k].queries, unrelated, c.vocab, max_len);
      std::ostringstream os;
      write_curve_csv(os, curve);
      pipeline::write_text(dir / ("curve_" + name + "_s" + std::to_string(k) + ".csv"), os.str());
      if (pooled.empty()) pooled = curve;
      else
        for (std::size_t i = 0; i < curve.size(); ++i) {
          auto& f = pooled[i].all.f1;
          f.insert(f.end(), curve[i].all.f1.begin(), curve[i].all.f1.end());
        }
      for (std::size_t q = 0; q < streams[k].queries.size(); ++q) position.push_back(q);
    }
    for (auto& p : pooled) p.f1_all = mean_of(p.all.f1);
    // The unadapted checkpoint is the reference itself; it is left out of the lag bins.
    const auto base_f1 = pooled.front().all.f1;
    res.time_since_doc[name] = time_since_doc_analysis({pooled.begin() + 1, pooled.end()}, base_f1, position,
                                                       ctx.cfg.integer("analyze.bin_width"));
    std::ostringstream os;
    write_lag_csv(os, res.time_since_doc[name]);
    pipeline::write_text(dir / ("time_since_doc_" + name + ".csv"), os.str());
    res.pooled_curve[name] = std::move(pooled);
  }
  return res;
}

}  // namespace camels

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

#include "camels/pipeline/stages.hpp"

using namespace camels;

namespace {

// Exit codes: 0 success, 1 invalid configuration or missing input, 2 numerical failure.
constexpr int kInvalid = 1;
constexpr int kNumeric = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online language-model adaptation with learned per-token loss weights"};
  app.require_subcommand(1);

  std::string config_path, out = "run";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
  bool quiet = false;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed (overrides the config key)");
  app.add_option("--out", out, "run directory; every stage reads and writes only here");
  app.add_option("--jobs", jobs, "concurrent sweep arms")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "extra key=value override, applied last")->take_all();
  app.add_flag("--quiet", quiet, "no progress lines");

  std::string style = "A", tag, stream = "test", method = "camels";
  std::optional<double> c_loc, lr;
  std::vector<std::string> methods;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic world and datasets into OUT/data");
  auto* tune = app.add_subcommand("qa-tune", "pretrain and QA-tune the base and proxy models into OUT/models");
  auto* meta = app.add_subcommand("meta-train", "meta-train the weight model on one style");
  meta->add_option("--style", style, "training style");
  meta->add_option("--c-loc", c_loc, "locality coefficient for this run only");
  meta->add_option("--tag", tag, "suffix for the weight-model files of a variant run");
  auto* sweep = app.add_subcommand("sweep", "learning-rate sweep per method on the validation stream");
  sweep->add_option("--methods", methods, "subset of methods (default: all)")->delimiter(',');
  sweep->add_option("--tag", tag, "weight-model variant used by the learned methods");
  auto* eval = app.add_subcommand("eval", "score methods on the seeded test streams at their swept rates");
  eval->add_option("--methods", methods, "subset of methods (default: all)")->delimiter(',');
  eval->add_option("--tag", tag, "weight-model variant used by the learned methods");
  auto* adapt = app.add_subcommand("adapt", "one adaptation run with logs, curve and final state");
  adapt->add_option("--method", method, "weighting method");
  adapt->add_option("--stream", stream, "valid (the sweep stream) or test (first test stream)");
  adapt->add_option("--lr", lr, "learning rate (default: the swept rate)");
  adapt->add_option("--tag", tag, "weight-model variant used by the learned methods");
  auto* transfer = app.add_subcommand("transfer", "train-style x test-style matrix of learned-weight adaptation");
  auto* analyze = app.add_subcommand("analyze", "weight dumps, histograms, forgetting and time-since-document curves");
  analyze->add_option("--tag", tag, "weight-model variant");

  CLI11_PARSE(app, argc, argv);

  RunContext ctx;
  ctx.out = out;
  ctx.jobs = jobs;
  if (!quiet) ctx.log = [t0 = std::chrono::steady_clock::now()](const std::string& s) {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%7.1fs] %s\n", sec, s.c_str());
  };
  try {
    if (!config_path.empty()) ctx.cfg.merge_file(config_path);
    ctx.cfg.merge_env();
    for (const auto& kv : overrides) ctx.cfg.merge_text(kv, "--set");
    if (seed) ctx.cfg.set("seed", std::to_string(*seed));

    std::filesystem::remove(ctx.out / "diagnostics.json");
    if (*gen) gen_data_stage(ctx);
    else if (*tune) qa_tune_stage(ctx);
    else if (*meta) meta_train_stage(ctx, style, c_loc, tag);
    else if (*sweep) sweep_stage(ctx, methods, tag);
    else if (*eval) eval_stage(ctx, methods, tag);
    else if (*adapt) adapt_stage(ctx, method, stream, lr, tag);
    else if (*transfer) transfer_stage(ctx);
    else if (*analyze) analyze_stage(ctx, tag);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    try {
      if (!std::filesystem::exists(ctx.out / "diagnostics.json"))
        pipeline::write_json(ctx.out / "diagnostics.json", {{"error", e.what()}});
    } catch (...) {
    }
    std::cerr << "diagnostics: " << (ctx.out / "diagnostics.json").string() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return 0;
}

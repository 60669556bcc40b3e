// debias: rebalance, infer, vote, chain23, sweep, eval, report.
//
// Exit codes: 0 success, 1 some sentences failed, 2 configuration or input error.

#include <CLI11.hpp>
#include <fmt/core.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "debias/error.hpp"
#include "debias/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
};

debias::RunConfig load_config(const Globals& g) {
  auto cfg = g.config.empty() ? debias::RunConfig::defaults() : debias::RunConfig::load(g.config);
  if (g.config.empty()) cfg.base_dir = fs::current_path();
  if (!g.cache_dir.empty()) cfg.cache_dir = fs::absolute(g.cache_dir);
  if (g.seed) cfg.seed = *g.seed;
  if (g.parallelism) cfg.parallelism = *g.parallelism;
  cfg.validate();
  return cfg;
}


int finish(const debias::CommandResult& r) {
  for (const auto& f : r.failures) fmt::print(stderr, "failed {}: {}\n", f.sentence_id, f.reason);
  if (!r.failures.empty()) fmt::print(stderr, "{} sentence(s) failed\n", r.failures.size());
  fmt::print("manifest: {}\n", r.manifest.string());
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender-bias detection, classification and mitigation pipeline"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--cache-dir", g.cache_dir, "Response cache directory");
  app.add_option("--seed", g.seed, "Rebalancing seed");
  app.add_option("--parallelism", g.parallelism, "Concurrent backend calls")->check(CLI::PositiveNumber);

  std::string dataset, out, types, votes, gold, predictions;
  std::string task_name;
  std::optional<double> temperature;
  std::optional<std::size_t> subsets;
  std::vector<int> experts;
  std::vector<std::string> files;
  std::vector<double> temperatures;
  std::optional<int> threshold, panel, designated;
  std::string fallback;

  auto* rebalance = app.add_subcommand("rebalance", "Build expert training sets");
  rebalance->add_option("--dataset", dataset, "Training set (JSONL)")->required();
  rebalance->add_option("--out", out, "Output directory")->required();
  rebalance->add_option("--subsets", subsets, "Non-biased parts (k)");

  auto* infer = app.add_subcommand("infer", "Query experts for one task");
  infer->add_option("--task", task_name, "detect | classify | mitigate")
      ->required()
      ->check(CLI::IsMember({"detect", "classify", "mitigate"}));
  infer->add_option("--dataset", dataset, "Sentences (JSONL)")->required();
  infer->add_option("--out", out, "Output directory")->required();
  infer->add_option("--temperature", temperature, "Sampling temperature");
  infer->add_option("--experts", experts, "Expert ids")->delimiter(',');
  infer->add_option("--types", types, "Predicted bias types (mitigate)");

  auto* vote = app.add_subcommand("vote", "Majority-vote expert predictions");
  vote->add_option("--task", task_name, "detect | classify")
      ->required()
      ->check(CLI::IsMember({"detect", "classify"}));
  vote->add_option("--predictions", files, "Prediction files")->required();
  vote->add_option("--out", out, "Output directory")->required();
  vote->add_option("--panel", panel, "Panel size");
  vote->add_option("--threshold", threshold, "Votes needed to win outright");
  vote->add_option("--fallback", fallback, "designated | mean_score")
      ->check(CLI::IsMember({"designated", "mean_score"}));
  vote->add_option("--designated-expert", designated, "Expert consulted on fallback");

  auto* chain = app.add_subcommand("chain23", "Classify with voting, then rewrite with the voted types");
  chain->add_option("--dataset", dataset, "Sentences (JSONL)")->required();
  chain->add_option("--out", out, "Output directory")->required();
  chain->add_option("--temperature", temperature, "Sampling temperature");
  chain->add_option("--votes", votes, "Existing classification votes");

  auto* sweep = app.add_subcommand("sweep", "Score mitigation at several temperatures");
  sweep->add_option("--dataset", dataset, "Gold set with reference rewrites")->required();
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--temperatures", temperatures, "Temperatures")->delimiter(',');
  sweep->add_option("--votes", votes, "Existing classification votes");

  auto* eval = app.add_subcommand("eval", "Score one task against gold");
  eval->add_option("--task", task_name, "detect | classify | mitigate")
      ->required()
      ->check(CLI::IsMember({"detect", "classify", "mitigate"}));
  eval->add_option("--predictions", predictions, "Answers (final.jsonl or mitigate.jsonl)")->required();
  eval->add_option("--gold", gold, "Gold set")->required();
  eval->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Combine evaluation reports");
  report->add_option("reports", files, "eval_<task>.json files")->required();
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto cfg = load_config(g);
    const auto task = task_name.empty() ? debias::Task::Detect : debias::parse_task(task_name);
    auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>() : fs::path(s); };

    if (*rebalance) {
      if (subsets) cfg.subsets = *subsets;
      return finish(debias::cmd_rebalance(cfg, dataset, out));
    }
    if (*infer) {
      debias::InferRequest r{task, dataset, out, temperature, std::nullopt, opt_path(types)};
      if (!experts.empty()) r.experts = experts;
      return finish(debias::cmd_infer(cfg, r));
    }
    if (*vote) {
      debias::VoteRequest r{task, {files.begin(), files.end()}, out, std::nullopt};
      if (threshold || panel || designated || !fallback.empty()) {
        auto policy = cfg.settings(task).policy;
        if (panel) policy.n_experts = *panel;
        if (threshold) policy.threshold = *threshold;
        if (designated) policy.designated_expert = *designated;
        if (!fallback.empty()) {
          policy.fallback = fallback == "designated" ? debias::FallbackRule::DesignatedExpert
                                                     : debias::FallbackRule::MeanScore;
        }
        r.policy = policy;
      }
      return finish(debias::cmd_vote(cfg, r));
    }
    if (*chain) {
      return finish(debias::cmd_chain23(cfg, {dataset, out, temperature, opt_path(votes)}));
    }
    if (*sweep) {
      debias::SweepRequest r{dataset, out, std::nullopt, opt_path(votes)};
      if (!temperatures.empty()) {
        debias::SweepSpec spec;
        spec.temperatures = temperatures;
        r.spec = spec;
      }
      return finish(debias::cmd_sweep(cfg, r));
    }
    if (*eval) {
      return finish(debias::cmd_eval(cfg, {task, predictions, gold, out}));
    }
    if (*report) {
      return finish(debias::cmd_report(cfg, {{files.begin(), files.end()}, out}));
    }
  } catch (const debias::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 2;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "debias/backend.hpp"
#include "debias/corpus.hpp"
#include "debias/ensemble.hpp"
#include "debias/metrics.hpp"
#include "debias/prompting.hpp"

namespace debias {

struct ExpertEndpoint {
  int expert_id = 0;
  std::string endpoint_id;
  std::string backend = "mock";  // "mock" | "http"
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
};

struct MockSettings {
  std::string key = "debias-mock";
  std::filesystem::path fixture;  // gold dataset the mock answers from, optional
  double default_accuracy = 0.8;
  std::map<std::string, double> accuracy;  // per endpoint id
  double malformed_rate = 0.0;
};

struct TaskSettings {
  std::vector<int> experts;
  double temperature = 0.1;
  VotingPolicy policy;
};

struct SweepSpec {
  std::vector<double> temperatures{0.01, 0.1, 0.3};
  Task task = Task::Mitigate;

  /// Throws Error(InvalidConfig) for an empty list, duplicates or negatives.
  void validate() const;
};

/// One run's configuration. Relative paths resolve against base_dir (the
/// config file's directory).
struct RunConfig {
  std::filesystem::path base_dir;
  std::uint64_t seed = 2025;
  std::size_t subsets = 5;
  int parallelism = 4;
  std::filesystem::path cache_dir = ".debias-cache";
  std::string template_set = "zh-v1";
  std::vector<ExpertEndpoint> experts;
  GenerationConfig generation;
  TaskSettings detect;
  TaskSettings classify;
  TaskSettings mitigate;
  SweepSpec sweep;
  MockSettings mock;
  Averaging classify_averaging = Averaging::Micro;
  MitigationOptions metrics;

  /// Six mock experts; single-expert detection and mitigation by expert 6,
  /// six-expert 4-of-6 voting for classification.
  static RunConfig defaults();
  /// Missing keys keep their defaults. Throws Error(InvalidConfig).
  static RunConfig from_json(std::string_view text, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  void validate() const;
  const ExpertEndpoint& expert(int expert_id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  const TaskSettings& settings(Task task) const;

  /// Canonical JSON of every setting that can change an output; run-local
  /// settings (cache location, parallelism) are left out.
  std::string canonical_json() const;
  std::string digest() const;
};

struct ManifestFile {
  std::string path;  // relative to the manifest's directory
  std::string sha256;
};

struct RunManifest {
  std::string run_id;
  std::string command;
  std::string config_digest;
  std::vector<ManifestFile> inputs;
  std::vector<ManifestFile> outputs;
  std::vector<std::string> template_ids;
  std::vector<std::string> endpoints;
  std::vector<double> temperatures;
  std::string started;
  std::string finished;
  std::vector<FailedSentence> failures;

  std::string to_json() const;
};

/// Files a manifest lists that are missing or whose digest differs.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path);

/// Builds the backend for one expert. Tests substitute their own.
using BackendFactory = std::function<std::shared_ptr<ChatBackend>(const ExpertEndpoint&)>;

struct Services {
  BackendFactory backend_factory;  // empty: mock/http per the config
};

struct CommandResult {
  int exit_code = 0;  // 0 success, 1 partial
  std::vector<FailedSentence> failures;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> outputs;
};

// Prediction files --------------------------------------------------------

std::string serialize_prediction(const ExpertPrediction& p);
ExpertPrediction parse_prediction(std::string_view line, std::size_t line_no);
std::vector<ExpertPrediction> load_predictions(const std::filesystem::path& path);

struct AnswerRecord {
  std::string sentence_id;
  Task task = Task::Detect;
  Answer answer;
  std::optional<BiasVector> bias_types;  // mitigation outputs: the types the prompt used
};

std::string serialize_final(const FinalPrediction& p);
std::vector<AnswerRecord> load_answers(const std::filesystem::path& path);

// Commands ------------------------------------------------------------------

CommandResult cmd_rebalance(const RunConfig& config, const std::filesystem::path& dataset,
                            const std::filesystem::path& out_dir);

struct InferRequest {
  Task task = Task::Detect;
  std::filesystem::path dataset;
  std::filesystem::path out_dir;
  std::optional<double> temperature;
  std::optional<std::vector<int>> experts;
  std::optional<std::filesystem::path> types_file;  // required for Mitigate
};

/// One prediction file per expert (expert_<id>.jsonl). The response cache is
/// consulted first, so an interrupted run resumes where it stopped.
CommandResult cmd_infer(const RunConfig& config, const InferRequest& request, const Services& services = {});

struct VoteRequest {
  Task task = Task::Classify;
  std::vector<std::filesystem::path> prediction_files;
  std::filesystem::path out_dir;
  std::optional<VotingPolicy> policy;
};

/// final.jsonl with per-sentence tallies and resolution.
CommandResult cmd_vote(const RunConfig& config, const VoteRequest& request);

struct Chain23Request {
  std::filesystem::path dataset;
  std::filesystem::path out_dir;
  std::optional<double> temperature;
  std::optional<std::filesystem::path> votes_file;  // skip classification when given
};

/// Classify with voting, then rewrite each sentence with its voted types.
/// Writes classify/, mitigate/ and mitigate.jsonl under out_dir.
CommandResult cmd_chain23(const RunConfig& config, const Chain23Request& request, const Services& services = {});

struct SweepRequest {
  std::filesystem::path dataset;  // gold with reference rewrites
  std::filesystem::path out_dir;
  std::optional<SweepSpec> spec;
  std::optional<std::filesystem::path> votes_file;
};

/// One mitigation score row per temperature: sweep.json and sweep.txt.
CommandResult cmd_sweep(const RunConfig& config, const SweepRequest& request, const Services& services = {});

struct EvalRequest {
  Task task = Task::Detect;
  std::filesystem::path predictions;
  std::filesystem::path gold;
  std::filesystem::path out_dir;
};

/// eval_<task>.json and .txt; overall.json and .txt once all three task
/// reports sit in out_dir. Throws Error(IdMismatch).
CommandResult cmd_eval(const RunConfig& config, const EvalRequest& request);

struct ReportRequest {
  std::vector<std::filesystem::path> reports;
  std::filesystem::path out_dir;
};

/// Combined table over eval reports, with the overall score when every task
/// is present.
CommandResult cmd_report(const RunConfig& config, const ReportRequest& request);

}  // namespace debias

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "debias/pipeline.hpp"
#include "io_util.hpp"

namespace debias {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// stops further work and is rethrown on the caller's thread.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      if (stop.load()) return;
      const auto i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first) first = std::current_exception();
        stop = true;
        return;
      }
    }
  };
  if (n_threads == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (first) std::rethrow_exception(first);
}

std::string timestamp() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_temperature(double t) { return fmt::format("{}", t); }

std::string relative_to(const fs::path& p, const fs::path& dir) {
  const auto abs = fs::absolute(p).lexically_normal();
  const auto base = fs::absolute(dir).lexically_normal();
  return abs.lexically_relative(base).generic_string();
}

class ManifestBuilder {
 public:
  ManifestBuilder(const RunConfig& config, std::string command, fs::path out_dir)
      : config_(config), command_(std::move(command)), out_dir_(std::move(out_dir)), started_(timestamp()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void outputs(const std::vector<fs::path>& ps) { outputs_.insert(outputs_.end(), ps.begin(), ps.end()); }
  void template_id(const std::string& id) { add_unique(templates_, id); }
  void endpoint(const std::string& id) { add_unique(endpoints_, id); }
  void temperature(double t) {
    if (std::find(temperatures_.begin(), temperatures_.end(), t) == temperatures_.end()) temperatures_.push_back(t);
  }
  void param(const std::string& p) { params_ += p + "\n"; }

  fs::path write(const std::string& file_name, const std::vector<FailedSentence>& failures) {
    RunManifest m;
    m.command = command_;
    m.config_digest = config_.digest();
    for (const auto& p : inputs_) m.inputs.push_back({relative_to(p, out_dir_), sha256_file(p)});
    for (const auto& p : outputs_) m.outputs.push_back({relative_to(p, out_dir_), sha256_file(p)});
    m.template_ids = templates_;
    m.endpoints = endpoints_;
    m.temperatures = temperatures_;
    m.started = started_;
    m.finished = timestamp();
    m.failures = failures;

    std::string seed = command_ + "|" + m.config_digest + "|" + params_;
    for (const auto& f : m.inputs) seed += f.sha256 + "|";
    m.run_id = sha256_hex(seed).substr(0, 16);

    const auto path = out_dir_ / file_name;
    detail::write_file_atomic(path, m.to_json());
    return path;
  }

 private:
  static void add_unique(std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  }

  const RunConfig& config_;
  std::string command_;
  fs::path out_dir_;
  std::string started_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
  std::vector<std::string> templates_;
  std::vector<std::string> endpoints_;
  std::vector<double> temperatures_;
  std::string params_;
};

class GoldMockBackend final : public ChatBackend {
 public:
  GoldMockBackend(MockBackend::Options options, std::shared_ptr<const Dataset> gold)
      : gold_(std::move(gold)), inner_(std::move(options), gold_.get()) {}

  RawCompletion call(const RenderedPrompt& prompt, const GenerationConfig& cfg) override {
    return inner_.call(prompt, cfg);
  }

 private:
  std::shared_ptr<const Dataset> gold_;
  MockBackend inner_;
};

BackendFactory default_factory(const RunConfig& config) {
  std::shared_ptr<const Dataset> gold;
  if (!config.mock.fixture.empty()) {
    const bool any_mock = std::any_of(config.experts.begin(), config.experts.end(),
                                      [](const ExpertEndpoint& e) { return e.backend == "mock"; });
    if (any_mock) gold = std::make_shared<const Dataset>(load_dataset(config.resolve(config.mock.fixture)));
  }
  MockBackend::Options options;
  options.key = config.mock.key;
  options.accuracy = config.mock.accuracy;
  options.default_accuracy = config.mock.default_accuracy;
  options.malformed_rate = config.mock.malformed_rate;
  return [gold, options](const ExpertEndpoint& e) -> std::shared_ptr<ChatBackend> {
    if (e.backend == "http") {
      HttpEndpoint h;
      h.base_url = e.base_url;
      h.path = e.path;
      h.model = e.model;
      if (const char* key = std::getenv(kApiKeyEnv)) h.api_key = key;
      return std::make_shared<HttpBackend>(std::move(h));
    }
    return std::make_shared<GoldMockBackend>(options, gold);
  };
}

// Classification and mitigation only concern biased sentences.
std::vector<const SentenceRecord*> task_records(const Dataset& dataset, Task task) {
  std::vector<const SentenceRecord*> out;
  for (const auto& r : dataset.records()) {
    if (task == Task::Detect || r.label == Label::Biased) out.push_back(&r);
  }
  return out;
}

std::map<std::string, BiasVector> load_types(const fs::path& path) {
  std::map<std::string, BiasVector> out;
  for (const auto& a : load_answers(path)) {
    std::optional<BiasVector> v = a.bias_types;
    if (!v) {
      if (const auto* b = std::get_if<BiasVector>(&a.answer)) v = *b;
    }
    if (!v) throw Error(Errc::MissingTypes, a.sentence_id, "no bias types in " + path.filename().string());
    if (!out.emplace(a.sentence_id, *v).second) throw Error(Errc::DuplicateId, a.sentence_id, path.string());
  }
  return out;
}

struct PredictContext {
  const RunConfig& config;
  const TemplateSet& templates;
  ResponseCache& cache;
};

ExpertPrediction predict_one(const PredictContext& ctx, ChatBackend& backend, const ExpertEndpoint& expert, Task task,
                             const SentenceRecord& record, const std::optional<BiasVector>& types, double temperature) {
  ExpertPrediction p;
  p.expert_id = expert.expert_id;
  p.sentence_id = record.id;
  p.task = task;
  p.temperature = temperature;

  GenerationConfig cfg = ctx.config.generation;
  cfg.endpoint_id = expert.endpoint_id;
  cfg.temperature = temperature;

  auto fetch = [&](const RenderedPrompt& prompt) {
    const CacheKey key{expert.expert_id, task, record.id, temperature, prompt.digest()};
    if (auto hit = ctx.cache.lookup(key)) return *hit;
    auto raw = complete(backend, prompt, cfg);
    ctx.cache.store(key, raw);
    return raw;
  };

  const auto prompt = render_prompt(ctx.templates, task, record, types);
  try {
    p.raw = fetch(prompt);
    try {
      p.answer = parse_answer(task, *p.raw, ctx.templates);
      p.parse_ok = true;
      return p;
    } catch (const Error& e) {
      if (e.code() != Errc::ParseFailure) throw;
    }
    p.raw = fetch(with_format_reminder(prompt, ctx.templates));
    try {
      p.answer = parse_answer(task, *p.raw, ctx.templates);
      p.parse_ok = true;
    } catch (const Error& e) {
      if (e.code() != Errc::ParseFailure) throw;
      p.error = e.what();
    }
  } catch (const BackendError& e) {
    p.raw.reset();
    p.answer.reset();
    p.parse_ok = false;
    p.error = e.what();
  }
  return p;
}

void add_failure(std::vector<FailedSentence>& failures, FailedSentence f) {
  const bool seen = std::any_of(failures.begin(), failures.end(),
                                [&](const FailedSentence& x) { return x.sentence_id == f.sentence_id; });
  if (!seen) failures.push_back(std::move(f));
}

int exit_code_for(const std::vector<FailedSentence>& failures) { return failures.empty() ? 0 : 1; }

void write_output(CommandResult& result, const fs::path& path, std::string_view content) {
  detail::write_file_atomic(path, content);
  result.outputs.push_back(path);
}

// Collapses a single-expert mitigation prediction file into mitigate.jsonl.
CommandResult write_mitigations(const fs::path& prediction_file, const fs::path& out_path,
                                const std::map<std::string, BiasVector>& types) {
  CommandResult r;
  std::string out;
  for (const auto& p : load_predictions(prediction_file)) {
    if (!p.parse_ok) {
      r.failures.push_back({p.sentence_id, p.error});
      continue;
    }
    ordered_json j;
    j["sentence_id"] = p.sentence_id;
    j["task"] = "mitigate";
    j["answer"] = std::get<std::string>(*p.answer);
    const auto it = types.find(p.sentence_id);
    j["bias_types"] = it == types.end() ? ordered_json(nullptr) : ordered_json(it->second.to_array());
    j["expert_id"] = p.expert_id;
    j["temperature"] = p.temperature;
    out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  }
  write_output(r, out_path, out);
  return r;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& r : rows) widths[c] = std::max(widths[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      s += c + 1 == cells.size() ? cells[c] : pad(cells[c], widths[c] + 2);
    }
    return s + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : widths) total += w + 2;
  out += std::string(total - 2, '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

std::string f4(double v) { return fmt::format("{:.4f}", v); }

ordered_json classification_json(const ClassificationReport& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn}};
}

ordered_json mitigation_json(const MitigationScore& s) {
  return {{"bleu", s.bleu},
          {"meteor", s.meteor},
          {"rouge_l", {{"precision", s.rouge_l.precision}, {"recall", s.rouge_l.recall}, {"f1", s.rouge_l.f1}}},
          {"average", s.average},
          {"n_pairs", s.n_pairs}};
}

std::string dump_report(const ordered_json& j) { return j.dump(2) + "\n"; }

// One row per task report plus the overall line when all three exist.
struct OverallTable {
  std::map<Task, double> scores;

  void add(const json& report, const std::string& source) {
    const auto task = parse_task(report.at("task").get<std::string>());
    if (!scores.emplace(task, report.at("score").get<double>()).second) {
      throw Error(Errc::InvalidArgument, source, "task " + std::string(to_string(task)) + " reported twice");
    }
  }
  bool complete() const { return scores.size() == 3; }
  double overall() const {
    return overall_score(scores.at(Task::Detect), scores.at(Task::Classify), scores.at(Task::Mitigate));
  }
  ordered_json to_json() const {
    ordered_json j;
    for (const auto t : {Task::Detect, Task::Classify, Task::Mitigate}) {
      if (scores.count(t)) j[std::string(to_string(t))] = scores.at(t);
    }
    if (complete()) j["overall"] = overall();
    return j;
  }
  std::string to_text() const {
    std::vector<std::string> header;
    std::vector<std::string> row;
    const std::map<Task, std::string> names{
        {Task::Detect, "Subtask 1 F1"}, {Task::Classify, "Subtask 2 F1"}, {Task::Mitigate, "Subtask 3 Avg"}};
    for (const auto t : {Task::Detect, Task::Classify, Task::Mitigate}) {
      if (!scores.count(t)) continue;
      header.push_back(names.at(t));
      row.push_back(f4(scores.at(t)));
    }
    if (complete()) {
      header.push_back("Average Score");
      row.push_back(f4(overall()));
    }
    return render_table(header, {row});
  }
};

}  // namespace

// --------------------------------------------------------------------------

CommandResult cmd_rebalance(const RunConfig& config, const fs::path& dataset_path, const fs::path& out_dir) {
  config.validate();
  const auto dataset = load_dataset(dataset_path);
  const auto experts = rebalance(dataset, config.subsets, config.seed);
  const auto manifest = export_expert_datasets(dataset, experts, out_dir);

  ManifestBuilder mb(config, "rebalance", out_dir);
  mb.input(dataset_path);
  mb.param(fmt::format("k={} seed={}", config.subsets, config.seed));
  CommandResult result;
  for (const auto& e : manifest.experts) result.outputs.push_back(out_dir / e.file);
  result.outputs.push_back(out_dir / "manifest.json");
  mb.outputs(result.outputs);
  result.manifest = mb.write("run-rebalance.json", {});
  return result;
}

CommandResult cmd_infer(const RunConfig& config, const InferRequest& request, const Services& services) {
  config.validate();
  const auto& settings = config.settings(request.task);
  const double temperature = request.temperature.value_or(settings.temperature);
  if (!(temperature >= 0.0)) throw Error(Errc::InvalidArgument, "temperature", "must be >= 0");
  const auto expert_ids = request.experts.value_or(settings.experts);
  if (expert_ids.empty()) throw Error(Errc::InvalidConfig, "experts", "no experts selected");
  {
    std::set<int> seen;
    for (int id : expert_ids) {
      if (!seen.insert(id).second) throw Error(Errc::InvalidConfig, std::to_string(id), "expert listed twice");
    }
  }

  std::map<std::string, BiasVector> types;
  if (request.task == Task::Mitigate) {
    if (!request.types_file) throw Error(Errc::MissingTypes, "types", "mitigation needs predicted bias types");
    types = load_types(*request.types_file);
  }

  const auto dataset = load_dataset(request.dataset);
  const auto templates = TemplateSet::resolve(config.template_set, config.base_dir);
  ResponseCache cache(config.resolve(config.cache_dir));
  const auto factory = services.backend_factory ? services.backend_factory : default_factory(config);

  std::vector<const ExpertEndpoint*> experts;
  std::vector<std::shared_ptr<ChatBackend>> backends;
  for (int id : expert_ids) {
    experts.push_back(&config.expert(id));
    backends.push_back(factory(*experts.back()));
  }

  CommandResult result;
  std::vector<const SentenceRecord*> records;
  for (const auto* r : task_records(dataset, request.task)) {
    if (request.task == Task::Mitigate && !types.count(r->id)) {
      add_failure(result.failures, {r->id, "MissingTypes(" + r->id + "): no predicted bias types"});
      continue;
    }
    records.push_back(r);
  }

  const PredictContext ctx{config, templates, cache};
  std::vector<ExpertPrediction> predictions(experts.size() * records.size());
  parallel_for(predictions.size(), config.parallelism, [&](std::size_t i) {
    const auto e = i / records.size();
    const auto& record = *records[i % records.size()];
    std::optional<BiasVector> t;
    if (request.task == Task::Mitigate) t = types.at(record.id);
    predictions[i] = predict_one(ctx, *backends[e], *experts[e], request.task, record, t, temperature);
  });

  ManifestBuilder mb(config, "infer", request.out_dir);
  mb.input(request.dataset);
  if (request.types_file) mb.input(*request.types_file);
  mb.template_id(templates.id());
  mb.temperature(temperature);
  mb.param(fmt::format("task={} temperature={}", to_string(request.task), format_temperature(temperature)));

  for (std::size_t e = 0; e < experts.size(); ++e) {
    mb.endpoint(experts[e]->endpoint_id);
    mb.param("expert=" + std::to_string(experts[e]->expert_id));
    std::string out;
    for (std::size_t s = 0; s < records.size(); ++s) {
      const auto& p = predictions[e * records.size() + s];
      if (!p.raw) {
        result.failures.push_back({p.sentence_id, fmt::format("expert {}: {}", p.expert_id, p.error)});
      }
      out += serialize_prediction(p) + "\n";
    }
    write_output(result, request.out_dir / fmt::format("expert_{}.jsonl", experts[e]->expert_id), out);
  }
  mb.outputs(result.outputs);
  result.manifest = mb.write(fmt::format("run-infer-{}.json", to_string(request.task)), result.failures);
  result.exit_code = exit_code_for(result.failures);
  return result;
}

CommandResult cmd_vote(const RunConfig& config, const VoteRequest& request) {
  if (request.task == Task::Mitigate) throw Error(Errc::InvalidArgument, "mitigate", "rewrites are not voted");
  if (request.prediction_files.empty()) throw Error(Errc::InvalidArgument, "vote", "no prediction files");
  const auto policy = request.policy.value_or(config.settings(request.task).policy);
  policy.validate();

  std::vector<ExpertPrediction> predictions;
  for (const auto& f : request.prediction_files) {
    auto part = load_predictions(f);
    predictions.insert(predictions.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const auto resolved = resolve_run(predictions, request.task, policy);

  CommandResult result;
  result.failures = resolved.failed;
  std::string out;
  for (const auto& p : resolved.decided) out += serialize_final(p) + "\n";
  write_output(result, request.out_dir / "final.jsonl", out);

  ManifestBuilder mb(config, "vote", request.out_dir);
  for (const auto& f : request.prediction_files) mb.input(f);
  mb.param(fmt::format("task={} n={} threshold={} fallback={} designated={}", to_string(request.task),
                       policy.n_experts, policy.threshold,
                       policy.fallback == FallbackRule::DesignatedExpert ? "designated" : "mean_score",
                       policy.designated_expert));
  mb.outputs(result.outputs);
  result.manifest = mb.write(fmt::format("run-vote-{}.json", to_string(request.task)), result.failures);
  result.exit_code = exit_code_for(result.failures);
  return result;
}

namespace {

// Classification with voting into out_dir/classify; returns the votes file.
fs::path classify_step(const RunConfig& config, const fs::path& dataset, const fs::path& out_dir,
                       std::optional<double> temperature, const Services& services, CommandResult& result,
                       ManifestBuilder& mb) {
  const auto dir = out_dir / "classify";
  InferRequest infer{Task::Classify, dataset, dir, temperature, std::nullopt, std::nullopt};
  auto inferred = cmd_infer(config, infer, services);
  for (const auto& f : inferred.failures) add_failure(result.failures, f);

  VoteRequest vote{Task::Classify, inferred.outputs, dir, std::nullopt};
  auto voted = cmd_vote(config, vote);
  for (const auto& f : voted.failures) add_failure(result.failures, f);

  mb.outputs(inferred.outputs);
  mb.output(inferred.manifest);
  mb.outputs(voted.outputs);
  mb.output(voted.manifest);
  mb.temperature(temperature.value_or(config.classify.temperature));
  for (int id : config.classify.experts) mb.endpoint(config.expert(id).endpoint_id);
  return dir / "final.jsonl";
}

// Mitigation of every voted sentence into dir/mitigate and dir/mitigate.jsonl.
fs::path mitigate_step(const RunConfig& config, const fs::path& dataset, const fs::path& votes, const fs::path& dir,
                       double temperature, const Services& services, CommandResult& result, ManifestBuilder& mb) {
  InferRequest infer{Task::Mitigate, dataset, dir / "mitigate", temperature, std::nullopt, votes};
  auto inferred = cmd_infer(config, infer, services);
  for (const auto& f : inferred.failures) add_failure(result.failures, f);

  const auto out = dir / "mitigate.jsonl";
  auto written = write_mitigations(inferred.outputs.front(), out, load_types(votes));
  for (const auto& f : written.failures) add_failure(result.failures, f);

  mb.outputs(inferred.outputs);
  mb.output(inferred.manifest);
  mb.outputs(written.outputs);
  mb.temperature(temperature);
  for (int id : config.mitigate.experts) mb.endpoint(config.expert(id).endpoint_id);
  return out;
}

}  // namespace

CommandResult cmd_chain23(const RunConfig& config, const Chain23Request& request, const Services& services) {
  config.validate();
  const auto templates = TemplateSet::resolve(config.template_set, config.base_dir);
  ManifestBuilder mb(config, "chain23", request.out_dir);
  mb.input(request.dataset);
  mb.template_id(templates.id());
  CommandResult result;

  fs::path votes;
  if (request.votes_file) {
    votes = *request.votes_file;
    mb.input(votes);
  } else {
    votes = classify_step(config, request.dataset, request.out_dir, request.temperature, services, result, mb);
  }

  // Sentences whose vote failed are already listed; the rest get rewritten.
  const double t = request.temperature.value_or(config.mitigate.temperature);
  mitigate_step(config, request.dataset, votes, request.out_dir, t, services, result, mb);

  mb.param(fmt::format("temperature={} votes={}", format_temperature(t), request.votes_file ? "given" : "voted"));
  result.manifest = mb.write("run-chain23.json", result.failures);
  result.outputs.insert(result.outputs.begin(), request.out_dir / "mitigate.jsonl");
  result.exit_code = exit_code_for(result.failures);
  return result;
}

CommandResult cmd_sweep(const RunConfig& config, const SweepRequest& request, const Services& services) {
  config.validate();
  const auto spec = request.spec.value_or(config.sweep);
  spec.validate();
  const auto gold = load_dataset(request.dataset, RecordSchema::Mitigation);
  const auto templates = TemplateSet::resolve(config.template_set, config.base_dir);

  ManifestBuilder mb(config, "sweep", request.out_dir);
  mb.input(request.dataset);
  mb.template_id(templates.id());
  CommandResult result;

  fs::path votes;
  if (request.votes_file) {
    votes = *request.votes_file;
    mb.input(votes);
  } else {
    votes = classify_step(config, request.dataset, request.out_dir, std::nullopt, services, result, mb);
  }

  ordered_json rows = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  for (const double t : spec.temperatures) {
    const auto dir = request.out_dir / ("t" + format_temperature(t));
    const auto file = mitigate_step(config, request.dataset, votes, dir, t, services, result, mb);

    std::map<std::string, std::string> answers;
    for (const auto& a : load_answers(file)) answers[a.sentence_id] = std::get<std::string>(a.answer);
    std::vector<TextPair> pairs;
    std::size_t failed = 0;
    for (const auto& r : gold.records()) {
      if (!r.reference) continue;
      const auto it = answers.find(r.id);
      if (it == answers.end()) ++failed;
      pairs.push_back({r.id, it == answers.end() ? std::string() : it->second, *r.reference});
    }
    const auto score = mitigation_score(pairs, config.metrics);
    auto row = mitigation_json(score);
    row["n_failed"] = failed;
    ordered_json entry{{"temperature", t}};
    entry.update(row);
    rows.push_back(entry);
    table.push_back({format_temperature(t), f4(score.bleu), f4(score.meteor), f4(score.rouge_l.f1), f4(score.average),
                     std::to_string(score.n_pairs)});
  }

  ordered_json sweep{{"task", "mitigate"}, {"rows", rows}};
  write_output(result, request.out_dir / "sweep.json", dump_report(sweep));
  write_output(result, request.out_dir / "sweep.txt",
               render_table({"Temperature", "BLEU", "METEOR", "ROUGE-L F1", "Average", "Pairs"}, table));
  mb.outputs(result.outputs);
  std::string temps;
  for (double t : spec.temperatures) temps += format_temperature(t) + ",";
  mb.param("temperatures=" + temps + (request.votes_file ? " votes=given" : " votes=voted"));
  result.manifest = mb.write("run-sweep.json", result.failures);
  result.exit_code = exit_code_for(result.failures);
  return result;
}

CommandResult cmd_eval(const RunConfig& config, const EvalRequest& request) {
  config.validate();
  const auto answers = load_answers(request.predictions);
  for (const auto& a : answers) {
    if (a.task != request.task) {
      throw Error(Errc::InvalidArgument, a.sentence_id,
                  fmt::format("{} answer in a {} evaluation", to_string(a.task), to_string(request.task)));
    }
  }
  const auto schema = request.task == Task::Mitigate ? RecordSchema::Mitigation : RecordSchema::Classification;
  const auto gold = load_dataset(request.gold, schema);

  ordered_json report;
  report["task"] = to_string(request.task);
  std::string text;
  auto check_unique = [&](const std::string& id, auto& map) {
    if (map.count(id)) throw Error(Errc::DuplicateId, id, request.predictions.string());
  };

  switch (request.task) {
    case Task::Detect: {
      std::map<std::string, bool> preds, golds;
      for (const auto& a : answers) {
        check_unique(a.sentence_id, preds);
        preds[a.sentence_id] = std::get<bool>(a.answer);
      }
      for (const auto& r : gold.records()) golds[r.id] = r.label == Label::Biased;
      const auto rep = detection_report(preds, golds);
      report.update(classification_json(rep));
      report["support"] = rep.support;
      report["score"] = rep.f1;
      text = render_table({"Subtask", "Precision", "Recall", "F1"},
                          {{"detect", f4(rep.precision), f4(rep.recall), f4(rep.f1)}});
      break;
    }
    case Task::Classify: {
      std::map<std::string, BiasVector> preds, golds;
      for (const auto& a : answers) {
        check_unique(a.sentence_id, preds);
        preds[a.sentence_id] = std::get<BiasVector>(a.answer);
      }
      for (const auto& r : gold.records()) {
        if (r.bias_types) golds[r.id] = *r.bias_types;
      }
      const auto head = multilabel_report(preds, golds, config.classify_averaging);
      report["averaging"] = to_string(config.classify_averaging);
      report.update(classification_json(head));
      report["support"] = head.support;
      report["score"] = head.f1;
      ordered_json modes;
      std::vector<std::vector<std::string>> rows;
      for (const auto mode : {Averaging::Micro, Averaging::Macro, Averaging::Sample}) {
        const auto r = multilabel_report(preds, golds, mode);
        modes[std::string(to_string(mode))] = {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
        rows.push_back({std::string(to_string(mode)), f4(r.precision), f4(r.recall), f4(r.f1)});
      }
      report["modes"] = modes;
      text = render_table({"Averaging", "Precision", "Recall", "F1"}, rows);
      break;
    }
    case Task::Mitigate: {
      std::map<std::string, std::string> preds;
      for (const auto& a : answers) {
        check_unique(a.sentence_id, preds);
        preds[a.sentence_id] = std::get<std::string>(a.answer);
      }
      std::vector<TextPair> pairs;
      std::vector<std::string> offending;
      std::set<std::string> gold_ids;
      for (const auto& r : gold.records()) {
        if (!r.reference) continue;
        gold_ids.insert(r.id);
        const auto it = preds.find(r.id);
        if (it == preds.end()) {
          offending.push_back(r.id);
          continue;
        }
        pairs.push_back({r.id, it->second, *r.reference});
      }
      for (const auto& [id, _] : preds) {
        if (!gold_ids.count(id)) offending.push_back(id);
      }
      if (!offending.empty()) {
        std::sort(offending.begin(), offending.end());
        std::string list;
        for (std::size_t i = 0; i < offending.size() && i < 10; ++i) list += (i ? ", " : "") + offending[i];
        if (offending.size() > 10) list += fmt::format(", ... ({} total)", offending.size());
        throw Error(Errc::IdMismatch, std::to_string(offending.size()) + " id(s)", list);
      }
      const auto s = mitigation_score(pairs, config.metrics);
      report.update(mitigation_json(s));
      report["score"] = s.average;
      text = render_table({"Subtask", "BLEU", "METEOR", "ROUGE-L F1", "Average"},
                          {{"mitigate", f4(s.bleu), f4(s.meteor), f4(s.rouge_l.f1), f4(s.average)}});
      break;
    }
  }

  CommandResult result;
  const auto stem = "eval_" + std::string(to_string(request.task));
  write_output(result, request.out_dir / (stem + ".json"), dump_report(report));
  write_output(result, request.out_dir / (stem + ".txt"), text);

  OverallTable overall;
  for (const auto t : {Task::Detect, Task::Classify, Task::Mitigate}) {
    const auto p = request.out_dir / ("eval_" + std::string(to_string(t)) + ".json");
    std::error_code ec;
    if (fs::exists(p, ec)) overall.add(json::parse(detail::read_file(p)), p.string());
  }
  if (overall.complete()) {
    write_output(result, request.out_dir / "overall.json", dump_report(overall.to_json()));
    write_output(result, request.out_dir / "overall.txt", overall.to_text());
  }

  ManifestBuilder mb(config, "eval", request.out_dir);
  mb.input(request.predictions);
  mb.input(request.gold);
  mb.param("task=" + std::string(to_string(request.task)));
  mb.outputs(result.outputs);
  result.manifest = mb.write("run-eval-" + std::string(to_string(request.task)) + ".json", {});
  return result;
}

CommandResult cmd_report(const RunConfig& config, const ReportRequest& request) {
  if (request.reports.empty()) throw Error(Errc::InvalidArgument, "report", "no reports given");
  OverallTable overall;
  ordered_json tasks = ordered_json::array();
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : request.reports) {
    json j;
    try {
      j = json::parse(detail::read_file(p));
      overall.add(j, p.string());
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedLine, p.string(), e.what());
    }
    ordered_json entry{{"task", j.at("task")}, {"score", j.at("score")}, {"source", relative_to(p, request.out_dir)}};
    tasks.push_back(entry);
    const auto task = j.at("task").get<std::string>();
    if (task == "mitigate") {
      rows.push_back({task, "-", "-", f4(j.at("rouge_l").at("f1").get<double>()), f4(j.at("bleu").get<double>()),
                      f4(j.at("meteor").get<double>()), f4(j.at("score").get<double>())});
    } else {
      rows.push_back({task, f4(j.at("precision").get<double>()), f4(j.at("recall").get<double>()),
                      f4(j.at("f1").get<double>()), "-", "-", f4(j.at("score").get<double>())});
    }
  }
  ordered_json out{{"tasks", tasks}};
  if (overall.complete()) out["overall"] = overall.overall();

  std::string text = render_table({"Subtask", "Precision", "Recall", "F1", "BLEU", "METEOR", "Score"}, rows);
  if (overall.complete()) text += "\n" + overall.to_text();

  CommandResult result;
  write_output(result, request.out_dir / "report.json", dump_report(out));
  write_output(result, request.out_dir / "report.txt", text);
  ManifestBuilder mb(config, "report", request.out_dir);
  for (const auto& p : request.reports) mb.input(p);
  mb.outputs(result.outputs);
  result.manifest = mb.write("run-report.json", {});
  return result;
}

}  // namespace debias

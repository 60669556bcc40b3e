#include <doctest.h>

#include <atomic>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>

#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "debias/pipeline.hpp"
#include "test_paths.hpp"

using namespace debias;
using testing_paths::fixture;
using testing_paths::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

fs::path first_n(const TempDir& dir, std::size_t n) {
  const auto all = load_dataset(fixture("gold50.jsonl"));
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += serialize_record(all.records()[i]) + "\n";
  const auto p = dir / "subset.jsonl";
  write_text(p, out);
  return p;
}

RunConfig test_config(const TempDir& dir) {
  auto c = RunConfig::defaults();
  c.base_dir = dir.path();
  c.cache_dir = dir / "cache";
  c.mock.fixture = fixture("gold50.jsonl");
  c.parallelism = 3;
  return c;
}

// Replies via `fn`; records every prompt it sees.
class Scripted final : public ChatBackend {
 public:
  using Fn = std::function<std::string(const RenderedPrompt&, const GenerationConfig&)>;
  explicit Scripted(Fn fn) : fn_(std::move(fn)) {}
  RawCompletion call(const RenderedPrompt& p, const GenerationConfig& cfg) override {
    ++calls;
    {
      std::lock_guard lock(mutex);
      prompts.push_back(p);
    }
    return RawCompletion{fn_(p, cfg), cfg.endpoint_id, {}, 1};
  }
  std::atomic<int> calls{0};
  std::mutex mutex;
  std::vector<RenderedPrompt> prompts;

 private:
  Fn fn_;
};

Services shared(std::shared_ptr<ChatBackend> b) {
  return Services{[b](const ExpertEndpoint&) { return b; }};
}

// Wraps the default mock backend and counts calls.
class Counting final : public ChatBackend {
 public:
  Counting(const RunConfig& c) {
    static std::shared_ptr<const Dataset> gold = std::make_shared<const Dataset>(load_dataset(fixture("gold50.jsonl")));
    gold_ = gold;
    MockBackend::Options o;
    inner_ = std::make_unique<MockBackend>(o, gold_.get());
    (void)c;
  }
  RawCompletion call(const RenderedPrompt& p, const GenerationConfig& cfg) override {
    ++calls;
    return inner_->call(p, cfg);
  }
  std::atomic<int> calls{0};

 private:
  std::shared_ptr<const Dataset> gold_;
  std::unique_ptr<MockBackend> inner_;
};

}  // namespace

TEST_CASE("config defaults and overrides") {
  const auto d = RunConfig::defaults();
  CHECK_NOTHROW(d.validate());
  CHECK(d.experts.size() == 6);
  CHECK(d.detect.experts == std::vector<int>{6});
  CHECK(d.classify.policy.threshold == 4);
  CHECK(d.detect.temperature == 0.1);
  CHECK(d.sweep.temperatures == std::vector<double>{0.01, 0.1, 0.3});

  const auto c = RunConfig::from_json(
      R"({"seed": 9, "tasks": {"detect": {"experts": [1,2,3,4,5,6], "temperature": 0.2}},
          "sweep": {"temperatures": [0.5]}})",
      "/tmp");
  CHECK(c.seed == 9);
  CHECK(c.detect.experts.size() == 6);
  CHECK(c.detect.policy.n_experts == 6);
  CHECK(c.detect.policy.threshold == 4);
  CHECK(c.detect.policy.designated_expert == 6);
  CHECK(c.detect.temperature == 0.2);
  CHECK_NOTHROW(c.validate());

  CHECK_THROWS_AS(RunConfig::from_json(R"({"sweep": {"temperatures": [0.1, 0.1]}})", "/tmp").validate(), Error);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"tasks": {"classify": {"experts": [1, 9]}}})", "/tmp").validate(), Error);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"tasks": {"mitigate": {"experts": [1, 2]}}})", "/tmp").validate(), Error);
  CHECK_THROWS_AS(RunConfig::from_json("not json", "/tmp"), Error);

  auto a = RunConfig::defaults();
  auto b = a;
  b.cache_dir = "/elsewhere";
  b.parallelism = 16;
  CHECK(a.digest() == b.digest());
  b.seed = 1;
  CHECK(a.digest() != b.digest());
}

TEST_CASE("prediction and final lines round trip") {
  ExpertPrediction p;
  p.expert_id = 3;
  p.sentence_id = "s1";
  p.task = Task::Classify;
  p.temperature = 0.3;
  p.answer = BiasVector(true, false, true);
  p.parse_ok = true;
  p.raw = RawCompletion{"[1, 0, 1]", "expert-3", std::chrono::milliseconds(5), 2};
  const auto line = serialize_prediction(p);
  const auto back = parse_prediction(line, 1);
  CHECK(serialize_prediction(back) == line);
  CHECK(std::get<BiasVector>(*back.answer) == BiasVector(true, false, true));

  ExpertPrediction failed;
  failed.expert_id = 1;
  failed.sentence_id = "s2";
  failed.error = "RetriesExhausted";
  const auto fl = serialize_prediction(failed);
  CHECK(fl.find("\"answer\":null") != std::string::npos);
  CHECK(fl.find("\"raw\":null") != std::string::npos);
  CHECK_FALSE(parse_prediction(fl, 1).raw.has_value());
  CHECK_THROWS_AS(parse_prediction("{}", 4), Error);
}

TEST_CASE("infer: 6 experts x 10 sentences, then cache hits only") {
  TempDir dir;
  auto cfg = test_config(dir);
  const auto data = first_n(dir, 10);
  auto backend = std::make_shared<Counting>(cfg);
  InferRequest req{Task::Detect, data, dir / "run1", std::nullopt, std::vector<int>{1, 2, 3, 4, 5, 6}, std::nullopt};
  const auto r1 = cmd_infer(cfg, req, shared(backend));
  CHECK(r1.exit_code == 0);
  REQUIRE(r1.outputs.size() == 6);
  std::size_t total = 0;
  for (const auto& o : r1.outputs) total += line_count(o);
  CHECK(total == 60);
  const int cold = backend->calls;
  CHECK(cold >= 60);

  req.out_dir = dir / "run2";
  const auto r2 = cmd_infer(cfg, req, shared(backend));
  CHECK(backend->calls == cold);
  for (std::size_t i = 0; i < 6; ++i) CHECK(slurp(r1.outputs[i]) == slurp(r2.outputs[i]));
  CHECK(verify_manifest(r1.manifest).empty());
}

TEST_CASE("infer: temperature recorded in manifest and cache keys") {
  TempDir dir;
  auto cfg = test_config(dir);
  const auto data = first_n(dir, 3);
  InferRequest req{Task::Detect, data, dir / "t03", 0.3, std::nullopt, std::nullopt};
  const auto r = cmd_infer(cfg, req);
  const auto m = nlohmann::json::parse(slurp(r.manifest));
  CHECK(m.at("temperatures") == nlohmann::json::array({0.3}));
  CHECK(m.at("template_ids") == nlohmann::json::array({"zh-v1"}));
  CHECK(m.at("endpoints") == nlohmann::json::array({"expert-6"}));

  ResponseCache cache(cfg.cache_dir);
  const auto preds = load_predictions(r.outputs.front());
  const auto records = load_dataset(data);
  const auto p = render_prompt(TemplateSet::builtin("zh-v1"), Task::Detect, records.records()[0]);
  CHECK(cache.lookup({6, Task::Detect, records.records()[0].id, 0.3, p.digest()}).has_value());
  CHECK_FALSE(cache.lookup({6, Task::Detect, records.records()[0].id, 0.1, p.digest()}).has_value());
  CHECK(preds[0].temperature == 0.3);
}

TEST_CASE("infer: mitigation needs a types file") {
  TempDir dir;
  const auto cfg = test_config(dir);
  try {
    cmd_infer(cfg, {Task::Mitigate, first_n(dir, 3), dir / "m", std::nullopt, std::nullopt, std::nullopt});
    FAIL("expected MissingTypes");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingTypes);
  }
}

TEST_CASE("infer: exhausted retries fail one sentence without aborting the run") {
  TempDir dir;
  auto cfg = test_config(dir);
  cfg.generation.retry_limit = 1;
  const auto data = first_n(dir, 5);
  const auto victim = load_dataset(data).records()[2].id;
  auto backend = std::make_shared<Scripted>([&](const RenderedPrompt& p, const GenerationConfig& c) -> std::string {
    if (p.sentence_id == victim) throw BackendError(Errc::Timeout, c.endpoint_id, p.sentence_id, "slow");
    return "true";
  });
  const auto r = cmd_infer(cfg, {Task::Detect, data, dir / "o", std::nullopt, std::nullopt, std::nullopt},
                           shared(backend));
  CHECK(r.exit_code == 1);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].sentence_id == victim);
  CHECK(r.failures[0].reason.find("RetriesExhausted") != std::string::npos);
  const auto preds = load_predictions(r.outputs.front());
  CHECK(preds.size() == 5);
  CHECK_FALSE(preds[2].raw.has_value());
  CHECK(preds[3].parse_ok);
  const auto m = nlohmann::json::parse(slurp(r.manifest));
  CHECK(m.at("failures").size() == 1);
}

TEST_CASE("infer: one re-ask with the format reminder") {
  TempDir dir;
  auto cfg = test_config(dir);
  const auto data = first_n(dir, 2);
  const auto reminder = TemplateSet::builtin("zh-v1").for_task(Task::Detect).format_reminder;
  auto backend = std::make_shared<Scripted>([&](const RenderedPrompt& p, const GenerationConfig&) -> std::string {
    const bool reminded = p.user_message().content.find(reminder) != std::string::npos;
    if (p.sentence_id == load_dataset(data).records()[0].id) return reminded ? "false" : "hmm";
    return "???";
  });
  const auto r = cmd_infer(cfg, {Task::Detect, data, dir / "o", std::nullopt, std::nullopt, std::nullopt},
                           shared(backend));
  CHECK(r.exit_code == 0);
  const auto preds = load_predictions(r.outputs.front());
  CHECK(preds[0].parse_ok);
  CHECK(preds[0].raw->text == "false");
  CHECK_FALSE(preds[1].parse_ok);
  CHECK(preds[1].raw->text == "???");
  CHECK(preds[1].error.find("ParseFailure") != std::string::npos);
  CHECK(backend->calls == 4);
}

TEST_CASE("chain23 composes voting and rendering") {
  TempDir dir;
  auto cfg = test_config(dir);
  const auto data = first_n(dir, 12);
  const auto ds = load_dataset(data);
  std::vector<std::string> biased;
  for (const auto& r : ds.records()) {
    if (r.label == Label::Biased) biased.push_back(r.id);
  }
  REQUIRE(biased.size() >= 3);
  const auto& lex = TemplateSet::builtin("zh-v1").bias_lexicon();

  auto backend = std::make_shared<Scripted>([&](const RenderedPrompt& p, const GenerationConfig&) -> std::string {
    if (p.task == Task::Classify) {
      if (p.sentence_id == biased[0]) return "unsure";  // every expert abstains
      if (p.sentence_id == biased[1]) return "[0, 0, 0]";
      return "[0, 1, 0]";
    }
    return "改写：新的句子";
  });
  const auto r = cmd_chain23(cfg, {data, dir / "chain", std::nullopt, std::nullopt}, shared(backend));
  CHECK(r.exit_code == 1);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].sentence_id == biased[0]);
  CHECK(r.failures[0].reason.find("NoUsableVotes") != std::string::npos);

  const auto outs = load_answers(dir / "chain/mitigate.jsonl");
  CHECK(outs.size() == biased.size() - 1);
  for (const auto& o : outs) CHECK(std::get<std::string>(o.answer) == "新的句子");

  for (const auto& p : backend->prompts) {
    if (p.task != Task::Mitigate) continue;
    CHECK(p.sentence_id != biased[0]);
    const auto& text = p.user_message().content;
    if (p.sentence_id == biased[1]) {
      CHECK(text.find(lex.none_phrase) != std::string::npos);
    } else {
      CHECK(text.find(lex.descriptions[1]) != std::string::npos);
      CHECK(text.find(lex.descriptions[0]) == std::string::npos);
    }
  }
  CHECK(verify_manifest(r.manifest).empty());
}

TEST_CASE("sweep rows per temperature") {
  TempDir dir;
  auto cfg = test_config(dir);
  const auto gold = fixture("gold50.jsonl");
  SweepRequest req{gold, dir / "s1", std::nullopt, std::nullopt};
  const auto a = cmd_sweep(cfg, req);
  const auto j = nlohmann::json::parse(slurp(dir / "s1/sweep.json"));
  CHECK(j.at("rows").size() == 3);
  CHECK(j["rows"][0]["temperature"] == 0.01);

  req.out_dir = dir / "s2";
  cmd_sweep(cfg, req);
  CHECK(slurp(dir / "s1/sweep.json") == slurp(dir / "s2/sweep.json"));
  CHECK(slurp(dir / "s1/sweep.txt") == slurp(dir / "s2/sweep.txt"));

  SweepSpec one;
  one.temperatures = {0.2};
  req.out_dir = dir / "s3";
  req.spec = one;
  cmd_sweep(cfg, req);
  CHECK(nlohmann::json::parse(slurp(dir / "s3/sweep.json")).at("rows").size() == 1);

  SweepSpec dup;
  dup.temperatures = {0.1, 0.1};
  req.spec = dup;
  CHECK_THROWS_AS(cmd_sweep(cfg, req), Error);
}

TEST_CASE("eval: Cloud Lab confusion counts and IdMismatch") {
  TempDir dir;
  const auto cfg = test_config(dir);
  // 100 biased, 100 not; TP 99, FN 1, FP 76, TN 24.
  std::string gold, preds;
  for (int i = 0; i < 200; ++i) {
    const bool biased = i < 100;
    const bool predicted = biased ? i < 99 : i < 176;
    const auto id = "d" + std::to_string(i);
    gold += biased ? R"({"id":")" + id + R"(","text":"t","label":"B","bias_types":[1,0,0]})" + "\n"
                   : R"({"id":")" + id + R"(","text":"t","label":"N"})" + "\n";
    preds += R"({"sentence_id":")" + id + R"(","task":"detect","answer":)" + (predicted ? "true" : "false") + "}\n";
  }
  write_text(dir / "gold.jsonl", gold);
  write_text(dir / "final.jsonl", preds);
  const auto r = cmd_eval(cfg, {Task::Detect, dir / "final.jsonl", dir / "gold.jsonl", dir / "eval"});
  const auto j = nlohmann::json::parse(slurp(dir / "eval/eval_detect.json"));
  CHECK(std::abs(j.at("f1").get<double>() - 0.720) <= 0.0005);
  CHECK(j.at("tp") == 99);
  CHECK(verify_manifest(r.manifest).empty());

  write_text(dir / "bad.jsonl", preds + R"({"sentence_id":"zz","task":"detect","answer":true})" + "\n");
  try {
    cmd_eval(cfg, {Task::Detect, dir / "bad.jsonl", dir / "gold.jsonl", dir / "eval2"});
    FAIL("expected IdMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IdMismatch);
    CHECK(std::string(e.what()).find("zz") != std::string::npos);
  }
}

TEST_CASE("report combines three task scores into the overall average") {
  TempDir dir;
  const auto cfg = test_config(dir);
  write_text(dir / "d.json", R"({"task":"detect","precision":0.566,"recall":0.99,"f1":0.72,"score":0.720})");
  write_text(dir / "c.json", R"({"task":"classify","precision":0.51,"recall":0.409,"f1":0.453,"score":0.453})");
  write_text(dir / "m.json",
             R"({"task":"mitigate","bleu":0.009,"meteor":0.391,"rouge_l":{"f1":0.394},"score":0.265})");
  const auto r = cmd_report(cfg, {{dir / "d.json", dir / "c.json", dir / "m.json"}, dir / "out"});
  const auto j = nlohmann::json::parse(slurp(dir / "out/report.json"));
  CHECK(std::abs(j.at("overall").get<double>() - 0.479) <= 0.0005);
  CHECK(slurp(dir / "out/report.txt").find("0.4793") != std::string::npos);
  CHECK(verify_manifest(r.manifest).empty());

  const auto partial = cmd_report(cfg, {{dir / "d.json"}, dir / "out2"});
  CHECK_FALSE(nlohmann::json::parse(slurp(dir / "out2/report.json")).contains("overall"));
  (void)partial;
  CHECK_THROWS_AS(cmd_report(cfg, {{dir / "d.json", dir / "d.json"}, dir / "out3"}), Error);
}

TEST_CASE("manifest verification detects tampering") {
  TempDir dir;
  const auto cfg = test_config(dir);
  const auto r = cmd_rebalance(cfg, fixture("train.jsonl"), dir / "reb");
  CHECK(verify_manifest(r.manifest).empty());
  const auto m = nlohmann::json::parse(slurp(r.manifest));
  CHECK(m.at("outputs").size() == 7);
  write_text(dir / "reb/expert_1.jsonl", "tampered\n");
  CHECK(verify_manifest(r.manifest).size() == 1);
}

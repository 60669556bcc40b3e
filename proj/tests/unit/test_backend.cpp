#include <doctest.h>

#include <atomic>
#include <thread>

#include "debias/backend.hpp"
#include "debias/error.hpp"
#include "generators.hpp"
#include "test_paths.hpp"

using namespace debias;
using testing_paths::TempDir;

namespace {

RawCompletion raw(std::string text) { return RawCompletion{std::move(text), "e", {}, 1}; }

RenderedPrompt prompt_for(Task task, const std::string& text, std::optional<BiasVector> types = std::nullopt) {
  SentenceRecord r{"s1", text, Label::Biased, BiasVector(true, false, false), std::nullopt};
  return render_prompt(TemplateSet::builtin("zh-v1"), task, r, types);
}

GenerationConfig config(double t = 0.1, int retries = 2) {
  GenerationConfig c;
  c.endpoint_id = "expert-1";
  c.temperature = t;
  c.retry_limit = retries;
  return c;
}

// Fails with `code` for the first `failures` calls, then answers.
class Flaky final : public ChatBackend {
 public:
  Flaky(int failures, Errc code) : failures_(failures), code_(code) {}
  RawCompletion call(const RenderedPrompt& p, const GenerationConfig& cfg) override {
    if (calls_++ < failures_) throw BackendError(code_, cfg.endpoint_id, p.sentence_id, "flaky");
    return RawCompletion{"true", cfg.endpoint_id, {}, 1};
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  Errc code_;
  int calls_ = 0;
};

template <typename Fn>
Errc error_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_CASE("generation config validation") {
  CHECK_NOTHROW(config().validate());
  auto c = config();
  c.temperature = -0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = config();
  c.retry_limit = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("mock backend is deterministic per prompt and temperature band") {
  MockBackend mock(MockBackend::Options{});
  const auto p = prompt_for(Task::Detect, "她是女生，所以不适合学编程。");
  const auto a = mock.call(p, config());
  const auto b = mock.call(p, config());
  CHECK(a == b);
  CHECK(a.endpoint_id == "expert-1");
  CHECK(MockBackend::temperature_band(0.1) == MockBackend::temperature_band(0.1000001));
  CHECK(MockBackend::temperature_band(0.1) != MockBackend::temperature_band(0.3));

  MockBackend other(MockBackend::Options{"another-key", {}, 0.8, 0.0, {}});
  bool differs = false;
  for (int i = 0; i < 40 && !differs; ++i) {
    const auto q = prompt_for(Task::Mitigate, "句子" + std::to_string(i), BiasVector(true, false, false));
    differs = mock.call(q, config(0.3)).text != other.call(q, config(0.3)).text;
  }
  CHECK(differs);
}

TEST_CASE("mock backend answers follow the gold fixture") {
  std::vector<SentenceRecord> records;
  for (int i = 0; i < 200; ++i) {
    const bool b = i % 2 == 0;
    records.push_back({"s" + std::to_string(i), "句子" + std::to_string(i), b ? Label::Biased : Label::NonBiased,
                       b ? std::optional<BiasVector>(BiasVector(false, true, false)) : std::nullopt,
                       b ? std::optional<std::string>("改写后的句子" + std::to_string(i)) : std::nullopt});
  }
  const Dataset gold(records);
  MockBackend::Options opts;
  opts.accuracy["expert-1"] = 1.0;
  MockBackend mock(opts, &gold);
  const auto& ts = TemplateSet::builtin("zh-v1");
  for (const auto& r : gold.records()) {
    const auto det = mock.call(render_prompt(ts, Task::Detect, r), config());
    CHECK(std::get<bool>(parse_answer(Task::Detect, det, ts)) == (r.label == Label::Biased));
    if (r.label == Label::Biased) {
      const auto cls = mock.call(render_prompt(ts, Task::Classify, r), config());
      CHECK(std::get<BiasVector>(parse_answer(Task::Classify, cls, ts)) == *r.bias_types);
      const auto mit = mock.call(render_prompt(ts, Task::Mitigate, r, r.bias_types), config(0.0));
      CHECK_NOTHROW(parse_answer(Task::Mitigate, mit, ts));
    }
  }
}

TEST_CASE("mock scripted replies and malformed outputs") {
  const auto p = prompt_for(Task::Detect, "x");
  MockBackend::Options opts;
  opts.scripted[p.digest()] = "scripted reply";
  CHECK(MockBackend(opts).call(p, config()).text == "scripted reply");

  MockBackend::Options broken;
  broken.malformed_rate = 1.0;
  const auto r = MockBackend(broken).call(p, config());
  CHECK_THROWS_AS(parse_detection(r), Error);
}

TEST_CASE("complete retries transient failures") {
  Flaky ok_after_two(2, Errc::Timeout);
  const auto r = complete(ok_after_two, prompt_for(Task::Detect, "x"), config(0.1, 2));
  CHECK(r.attempt == 3);
  CHECK(ok_after_two.calls() == 3);

  Flaky timeout_once(1, Errc::Timeout);
  try {
    complete(timeout_once, prompt_for(Task::Detect, "x"), config(0.1, 0));
    FAIL("expected RetriesExhausted");
  } catch (const BackendError& e) {
    CHECK(e.code() == Errc::RetriesExhausted);
    CHECK(e.endpoint_id() == "expert-1");
    CHECK(e.sentence_id() == "s1");
  }
  CHECK(timeout_once.calls() == 1);

  Flaky auth(5, Errc::InvalidConfig);
  CHECK(error_code([&] { complete(auth, prompt_for(Task::Detect, "x"), config(0.1, 3)); }) == Errc::InvalidConfig);
  CHECK(auth.calls() == 1);

  Flaky down(10, Errc::EndpointUnreachable);
  CHECK(error_code([&] { complete(down, prompt_for(Task::Detect, "x"), config(0.1, 2)); }) ==
        Errc::RetriesExhausted);
  CHECK(down.calls() == 3);
}

TEST_CASE("parse_detection") {
  CHECK(parse_detection(raw("true")) == true);
  CHECK(parse_detection(raw("The answer is False.")) == false);
  CHECK(parse_detection(raw("TRUE, not false")) == true);
  CHECK(parse_detection(raw("是")) == true);
  CHECK(parse_detection(raw("不是")) == false);
  CHECK(parse_detection(raw("该句子没有偏见"), TemplateSet::builtin("zh-v1").answers()) == false);
  CHECK(error_code([] { parse_detection(raw("maybe")); }) == Errc::ParseFailure);
  CHECK(error_code([] { parse_detection(raw("")); }) == Errc::ParseFailure);
  CHECK(error_code([] { parse_detection(raw("construe")); }) == Errc::ParseFailure);
}

TEST_CASE("parse_classification") {
  CHECK(parse_classification(raw("[1, 0, 0]")) == BiasVector(true, false, false));
  CHECK(parse_classification(raw("AC and ANB")) == BiasVector(true, false, true));
  CHECK(parse_classification(raw("偏见类型：［0，1，1］")) == BiasVector(false, true, true));
  CHECK(parse_classification(raw("no bias type")) == BiasVector{});
  CHECK(error_code([] { parse_classification(raw("[2,0,0]")); }) == Errc::ParseFailure);
  CHECK(error_code([] { parse_classification(raw("nothing here")); }) == Errc::ParseFailure);
}

TEST_CASE("parse_mitigation") {
  CHECK(parse_mitigation(raw("改写：她可以自由选择职业。")) == "她可以自由选择职业。");
  CHECK(parse_mitigation(raw("她可以自由选择职业。")) == "她可以自由选择职业。");
  CHECK(parse_mitigation(raw("“她可以自由选择职业。”")) == "她可以自由选择职业。");
  CHECK(error_code([] { parse_mitigation(raw("")); }) == Errc::ParseFailure);
  CHECK(error_code([] { parse_mitigation(raw("改写：")); }) == Errc::ParseFailure);
}

TEST_CASE("parsers are total on arbitrary bytes") {
  gen::Source g(5);
  const std::string alphabet = "[]01, ACDINBtruefalse改写：是否\"\xe2\x80\x9c\xff\n";
  const auto& ts = TemplateSet::builtin("zh-v1");
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const auto n = g.below(24);
    for (std::size_t k = 0; k < n; ++k) s += alphabet[g.below(alphabet.size())];
    for (const auto task : {Task::Detect, Task::Classify, Task::Mitigate}) {
      try {
        const auto a = parse_answer(task, raw(s), ts);
        if (task == Task::Mitigate) CHECK_FALSE(std::get<std::string>(a).empty());
      } catch (const Error& e) {
        CHECK(e.code() == Errc::ParseFailure);
      }
    }
  }
}

TEST_CASE("cache round trip and key separation") {
  TempDir dir;
  ResponseCache cache(dir.path());
  CacheKey k1{1, Task::Mitigate, "s1", 0.1, "abc"};
  CacheKey k3 = k1;
  k3.temperature = 0.3;
  CHECK_FALSE(cache.lookup(k1).has_value());
  const RawCompletion c{"改写：x", "expert-1", std::chrono::milliseconds(12), 2};
  cache.store(k1, c);
  CHECK(cache.lookup(k1) == c);
  CHECK_FALSE(cache.lookup(k3).has_value());
  CHECK(cache.path_for(k1) != cache.path_for(k3));
  cache.store(k3, raw("other"));
  CHECK(cache.lookup(k1) == c);
  CHECK(cache.lookup(k3)->text == "other");
  CHECK(k1.canonical().find("temperature=0.10000000000000001") != std::string::npos);
}

TEST_CASE("cache tolerates concurrent writers") {
  TempDir dir;
  ResponseCache cache(dir.path());
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        CacheKey k{t % 2, Task::Detect, "s" + std::to_string(i), 0.1, "d"};
        cache.store(k, raw(std::to_string(i)));
        const auto got = cache.lookup(k);
        CHECK((got && got->text == std::to_string(i)));
      }
    });
  }
  for (auto& t : threads) t.join();
}

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "debias/pipeline.hpp"
#include "io_util.hpp"

namespace debias {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void SweepSpec::validate() const {
  if (temperatures.empty()) throw Error(Errc::InvalidConfig, "sweep", "temperature list is empty");
  std::set<double> seen;
  for (const double t : temperatures) {
    if (!std::isfinite(t) || t < 0.0) throw Error(Errc::InvalidConfig, "sweep", "temperatures must be >= 0");
    if (!seen.insert(t).second) {
      throw Error(Errc::InvalidConfig, "sweep", "duplicate temperature " + json(t).dump());
    }
  }
  if (task != Task::Mitigate) throw Error(Errc::InvalidConfig, "sweep", "only mitigation is swept");
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (int id = 1; id <= 6; ++id) {
    ExpertEndpoint e;
    e.expert_id = id;
    e.endpoint_id = "expert-" + std::to_string(id);
    c.experts.push_back(e);
  }
  c.detect.experts = {6};
  c.detect.policy = VotingPolicy::single_expert(6);
  c.classify.experts = {1, 2, 3, 4, 5, 6};
  c.classify.policy = VotingPolicy{};
  c.mitigate.experts = {6};
  c.mitigate.policy = VotingPolicy::single_expert(6);
  return c;
}

namespace {

FallbackRule parse_fallback(const std::string& s) {
  if (s == "designated") return FallbackRule::DesignatedExpert;
  if (s == "mean_score") return FallbackRule::MeanScore;
  throw Error(Errc::InvalidConfig, s, "fallback must be \"designated\" or \"mean_score\"");
}

std::string_view fallback_name(FallbackRule f) {
  return f == FallbackRule::DesignatedExpert ? "designated" : "mean_score";
}

Averaging parse_averaging(const std::string& s) {
  if (s == "micro") return Averaging::Micro;
  if (s == "macro") return Averaging::Macro;
  if (s == "sample") return Averaging::Sample;
  throw Error(Errc::InvalidConfig, s, "averaging must be micro, macro or sample");
}

void read_task(const json& j, TaskSettings& t) {
  t.experts = j.value("experts", t.experts);
  t.temperature = j.value("temperature", t.temperature);
  if (t.experts.empty()) return;
  const int n = static_cast<int>(t.experts.size());
  if (n != t.policy.n_experts) {
    // A resized panel starts from a strict majority deferring to its
    // highest-numbered expert (expert 6 in the standard panel).
    t.policy.n_experts = n;
    t.policy.threshold = n / 2 + 1;
    t.policy.designated_expert = *std::max_element(t.experts.begin(), t.experts.end());
  }
  if (j.contains("voting")) {
    const auto& v = j.at("voting");
    t.policy.threshold = v.value("threshold", t.policy.threshold);
    if (v.contains("fallback")) t.policy.fallback = parse_fallback(v.at("fallback").get<std::string>());
    t.policy.designated_expert = v.value("designated_expert", t.policy.designated_expert);
  }
}

ordered_json task_json(const TaskSettings& t) {
  ordered_json j;
  j["experts"] = t.experts;
  j["temperature"] = t.temperature;
  j["voting"] = {{"n_experts", t.policy.n_experts},
                 {"threshold", t.policy.threshold},
                 {"fallback", fallback_name(t.policy.fallback)},
                 {"designated_expert", t.policy.designated_expert}};
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c = defaults();
  c.base_dir = base_dir;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw Error(Errc::InvalidConfig, "config", "top level must be an object");
    c.seed = j.value("seed", c.seed);
    c.subsets = j.value("subsets", c.subsets);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
    c.template_set = j.value("template_set", c.template_set);

    if (j.contains("experts")) {
      c.experts.clear();
      for (const auto& e : j.at("experts")) {
        ExpertEndpoint ep;
        ep.expert_id = e.at("expert_id").get<int>();
        ep.endpoint_id = e.value("endpoint_id", "expert-" + std::to_string(ep.expert_id));
        ep.backend = e.value("backend", ep.backend);
        ep.base_url = e.value("base_url", ep.base_url);
        ep.path = e.value("path", ep.path);
        ep.model = e.value("model", ep.model);
        c.experts.push_back(ep);
      }
    }
    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      c.generation.max_output_tokens = g.value("max_output_tokens", c.generation.max_output_tokens);
      c.generation.retry_limit = g.value("retry_limit", c.generation.retry_limit);
      c.generation.timeout = std::chrono::milliseconds(g.value("timeout_ms", c.generation.timeout.count()));
      if (g.contains("top_p") && !g.at("top_p").is_null()) c.generation.top_p = g.at("top_p").get<double>();
    }
    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      if (t.contains("detect")) read_task(t.at("detect"), c.detect);
      if (t.contains("classify")) read_task(t.at("classify"), c.classify);
      if (t.contains("mitigate")) read_task(t.at("mitigate"), c.mitigate);
    }
    if (j.contains("sweep")) c.sweep.temperatures = j.at("sweep").value("temperatures", c.sweep.temperatures);
    if (j.contains("mock")) {
      const auto& m = j.at("mock");
      c.mock.key = m.value("key", c.mock.key);
      if (m.contains("fixture") && !m.at("fixture").is_null()) c.mock.fixture = m.at("fixture").get<std::string>();
      c.mock.default_accuracy = m.value("default_accuracy", c.mock.default_accuracy);
      if (m.contains("accuracy")) c.mock.accuracy = m.at("accuracy").get<std::map<std::string, double>>();
      c.mock.malformed_rate = m.value("malformed_rate", c.mock.malformed_rate);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      if (m.contains("granularity")) {
        const auto g = m.at("granularity").get<std::string>();
        if (g == "character") c.metrics.granularity = Granularity::Character;
        else if (g == "whitespace") c.metrics.granularity = Granularity::Whitespace;
        else throw Error(Errc::InvalidConfig, g, "granularity must be character or whitespace");
      }
      if (m.contains("classify_averaging")) c.classify_averaging = parse_averaging(m.at("classify_averaging").get<std::string>());
      if (m.contains("bleu")) {
        const auto& b = m.at("bleu");
        c.metrics.bleu.max_n = b.value("max_n", c.metrics.bleu.max_n);
        c.metrics.bleu.epsilon = b.value("epsilon", c.metrics.bleu.epsilon);
        c.metrics.corpus_level_bleu = b.value("corpus_level", c.metrics.corpus_level_bleu);
        if (b.contains("smoothing")) {
          const auto s = b.at("smoothing").get<std::string>();
          if (s == "none") c.metrics.bleu.smoothing = Smoothing::None;
          else if (s == "epsilon") c.metrics.bleu.smoothing = Smoothing::AddEpsilon;
          else throw Error(Errc::InvalidConfig, s, "smoothing must be none or epsilon");
        }
      }
      if (m.contains("meteor")) {
        const auto& mt = m.at("meteor");
        c.metrics.meteor.alpha = mt.value("alpha", c.metrics.meteor.alpha);
        c.metrics.meteor.gamma = mt.value("gamma", c.metrics.meteor.gamma);
        c.metrics.meteor.beta_exp = mt.value("beta_exp", c.metrics.meteor.beta_exp);
      }
      if (m.contains("rouge")) c.metrics.rouge.beta = m.at("rouge").value("beta", c.metrics.rouge.beta);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, "config", e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from_json(detail::read_file(path), path.parent_path());
}

void RunConfig::validate() const {
  if (parallelism < 1) throw Error(Errc::InvalidConfig, "parallelism", "must be >= 1");
  if (subsets < 2) throw Error(Errc::InvalidConfig, "subsets", "must be >= 2");
  std::set<int> ids;
  std::set<std::string> endpoints;
  for (const auto& e : experts) {
    if (e.expert_id < 1) throw Error(Errc::InvalidConfig, std::to_string(e.expert_id), "expert ids start at 1");
    if (!ids.insert(e.expert_id).second) throw Error(Errc::InvalidConfig, std::to_string(e.expert_id), "duplicate expert id");
    if (e.endpoint_id.empty()) throw Error(Errc::InvalidConfig, std::to_string(e.expert_id), "empty endpoint_id");
    endpoints.insert(e.endpoint_id);
    if (e.backend != "mock" && e.backend != "http") {
      throw Error(Errc::InvalidConfig, e.endpoint_id, "backend must be mock or http");
    }
    if (e.backend == "http" && e.base_url.empty()) throw Error(Errc::InvalidConfig, e.endpoint_id, "http backend needs base_url");
  }
  for (const auto* t : {&detect, &classify, &mitigate}) {
    if (t->experts.empty()) throw Error(Errc::InvalidConfig, "tasks", "every task needs at least one expert");
    for (int id : t->experts) {
      if (!ids.contains(id)) throw Error(Errc::InvalidConfig, std::to_string(id), "task names an unknown expert");
    }
    if (std::set<int>(t->experts.begin(), t->experts.end()).size() != t->experts.size()) {
      throw Error(Errc::InvalidConfig, "tasks", "task lists an expert twice");
    }
    if (static_cast<std::size_t>(t->policy.n_experts) != t->experts.size()) {
      throw Error(Errc::InvalidConfig, "tasks", "voting panel size must equal the task's expert count");
    }
    if (!std::isfinite(t->temperature) || t->temperature < 0.0) {
      throw Error(Errc::InvalidConfig, "tasks", "temperature must be >= 0");
    }
    t->policy.validate();
  }
  if (mitigate.experts.size() != 1) throw Error(Errc::InvalidConfig, "mitigate", "mitigation uses exactly one expert");
  GenerationConfig probe = generation;
  probe.endpoint_id = "generation";
  probe.validate();
  sweep.validate();
  if (!(mock.malformed_rate >= 0.0 && mock.malformed_rate <= 1.0) ||
      !(mock.default_accuracy >= 0.0 && mock.default_accuracy <= 1.0)) {
    throw Error(Errc::InvalidConfig, "mock", "rates must lie in [0, 1]");
  }
  metrics.meteor.validate();
  metrics.rouge.validate();
  if (metrics.bleu.max_n == 0) throw Error(Errc::InvalidConfig, "bleu", "max_n must be >= 1");
}

const ExpertEndpoint& RunConfig::expert(int expert_id) const {
  for (const auto& e : experts) {
    if (e.expert_id == expert_id) return e;
  }
  throw Error(Errc::InvalidConfig, std::to_string(expert_id), "unknown expert");
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

const TaskSettings& RunConfig::settings(Task task) const {
  switch (task) {
    case Task::Detect: return detect;
    case Task::Classify: return classify;
    case Task::Mitigate: return mitigate;
  }
  return detect;
}

std::string RunConfig::canonical_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["subsets"] = subsets;
  j["template_set"] = template_set;
  j["experts"] = ordered_json::array();
  for (const auto& e : experts) {
    j["experts"].push_back({{"expert_id", e.expert_id},
                            {"endpoint_id", e.endpoint_id},
                            {"backend", e.backend},
                            {"base_url", e.base_url},
                            {"path", e.path},
                            {"model", e.model}});
  }
  j["generation"] = {{"max_output_tokens", generation.max_output_tokens},
                     {"retry_limit", generation.retry_limit},
                     {"timeout_ms", generation.timeout.count()},
                     {"top_p", generation.top_p ? ordered_json(*generation.top_p) : ordered_json(nullptr)}};
  j["tasks"] = {{"detect", task_json(detect)}, {"classify", task_json(classify)}, {"mitigate", task_json(mitigate)}};
  j["sweep"] = {{"temperatures", sweep.temperatures}};
  const auto fixture = resolve(mock.fixture);
  j["mock"] = {{"key", mock.key},
               {"fixture_sha256", fixture.empty() ? std::string() : sha256_file(fixture)},
               {"default_accuracy", mock.default_accuracy},
               {"accuracy", mock.accuracy},
               {"malformed_rate", mock.malformed_rate}};
  j["metrics"] = {{"granularity", metrics.granularity == Granularity::Character ? "character" : "whitespace"},
                  {"classify_averaging", to_string(classify_averaging)},
                  {"bleu",
                   {{"max_n", metrics.bleu.max_n},
                    {"smoothing", metrics.bleu.smoothing == Smoothing::None ? "none" : "epsilon"},
                    {"epsilon", metrics.bleu.epsilon},
                    {"corpus_level", metrics.corpus_level_bleu}}},
                  {"meteor",
                   {{"alpha", metrics.meteor.alpha}, {"gamma", metrics.meteor.gamma}, {"beta_exp", metrics.meteor.beta_exp}}},
                  {"rouge", {{"beta", metrics.rouge.beta}}}};
  return j.dump(2);
}

std::string RunConfig::digest() const { return sha256_hex(canonical_json()); }

}  // namespace debias

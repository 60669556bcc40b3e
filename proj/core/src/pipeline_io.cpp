#include <nlohmann/json.hpp>
#include <sstream>

#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "debias/pipeline.hpp"
#include "io_util.hpp"

namespace debias {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string dump_line(const ordered_json& j) { return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace); }

ordered_json answer_json(const Answer& a) {
  if (const auto* b = std::get_if<bool>(&a)) return *b;
  if (const auto* v = std::get_if<BiasVector>(&a)) return v->to_array();
  return std::get<std::string>(a);
}

BiasVector vector_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::MalformedLine, where, "expected a 3-slot vector");
  BiasVector v;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto x = j[i].get<int>();
    if (x != 0 && x != 1) throw Error(Errc::MalformedLine, where, "vector slots must be 0 or 1");
    v.set_slot(i, x == 1);
  }
  return v;
}

Answer answer_from(Task task, const nlohmann::json& j, const std::string& where) {
  switch (task) {
    case Task::Detect:
      if (!j.is_boolean()) throw Error(Errc::MalformedLine, where, "detect answers are booleans");
      return j.get<bool>();
    case Task::Classify: return vector_from(j, where);
    case Task::Mitigate:
      if (!j.is_string()) throw Error(Errc::MalformedLine, where, "mitigate answers are strings");
      return j.get<std::string>();
  }
  throw Error(Errc::MalformedLine, where, "unknown task");
}

ordered_json tally_json(const VoteOutcome& o) {
  return {{"true", o.tally.yes}, {"false", o.tally.no}, {"abstain", o.tally.abstain}};
}

}  // namespace

std::string serialize_prediction(const ExpertPrediction& p) {
  ordered_json j;
  j["expert_id"] = p.expert_id;
  j["sentence_id"] = p.sentence_id;
  j["task"] = to_string(p.task);
  j["temperature"] = p.temperature;
  j["parse_ok"] = p.parse_ok;
  j["answer"] = p.answer ? answer_json(*p.answer) : ordered_json(nullptr);
  if (p.raw) {
    j["raw"] = {{"text", p.raw->text},
                {"endpoint_id", p.raw->endpoint_id},
                {"latency_ms", p.raw->latency.count()},
                {"attempt", p.raw->attempt}};
  } else {
    j["raw"] = nullptr;
  }
  j["error"] = p.error;
  return dump_line(j);
}

ExpertPrediction parse_prediction(std::string_view line, std::size_t line_no) {
  const std::string where = std::to_string(line_no);
  try {
    const auto j = nlohmann::json::parse(line);
    ExpertPrediction p;
    p.expert_id = j.at("expert_id").get<int>();
    p.sentence_id = j.at("sentence_id").get<std::string>();
    p.task = parse_task(j.at("task").get<std::string>());
    p.temperature = j.value("temperature", 0.0);
    p.parse_ok = j.value("parse_ok", false);
    if (j.contains("answer") && !j.at("answer").is_null()) p.answer = answer_from(p.task, j.at("answer"), where);
    if (j.contains("raw") && !j.at("raw").is_null()) {
      const auto& r = j.at("raw");
      RawCompletion c;
      c.text = r.at("text").get<std::string>();
      c.endpoint_id = r.value("endpoint_id", "");
      c.latency = std::chrono::milliseconds(r.value("latency_ms", 0LL));
      c.attempt = r.value("attempt", 1);
      p.raw = c;
    }
    p.error = j.value("error", "");
    if (p.parse_ok != p.answer.has_value()) {
      throw Error(Errc::MalformedLine, where, "parse_ok must match the presence of an answer");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedLine, where, e.what());
  }
}

std::vector<ExpertPrediction> load_predictions(const std::filesystem::path& path) {
  std::vector<ExpertPrediction> out;
  const auto text = detail::read_file(path);
  detail::for_each_line(text, [&](std::string_view line, std::size_t n) {
    try {
      out.push_back(parse_prediction(line, n));
    } catch (const Error& e) {
      throw Error(e.code(), path.filename().string() + ":" + e.subject(), e.what());
    }
  });
  return out;
}

std::string serialize_final(const FinalPrediction& p) {
  ordered_json j;
  j["sentence_id"] = p.sentence_id;
  j["task"] = to_string(p.task);
  j["answer"] = answer_json(p.answer);
  if (const auto* o = std::get_if<VoteOutcome>(&p.outcome)) {
    j["tally"] = tally_json(*o);
  } else {
    const auto& m = std::get<MultiLabelOutcome>(p.outcome);
    ordered_json t;
    for (std::size_t i = 0; i < 3; ++i) {
      auto slot = tally_json(m.slots[i]);
      slot["resolved_by"] = to_string(m.slots[i].resolved_by);
      t[std::string(code_of(kBiasTypes[i]))] = slot;
    }
    j["tally"] = t;
  }
  j["resolved_by"] = to_string(p.resolved_by);
  return dump_line(j);
}

std::vector<AnswerRecord> load_answers(const std::filesystem::path& path) {
  std::vector<AnswerRecord> out;
  const auto text = detail::read_file(path);
  detail::for_each_line(text, [&](std::string_view line, std::size_t n) {
    const std::string where = path.filename().string() + ":" + std::to_string(n);
    try {
      const auto j = nlohmann::json::parse(line);
      AnswerRecord r;
      r.sentence_id = j.at("sentence_id").get<std::string>();
      r.task = parse_task(j.at("task").get<std::string>());
      r.answer = answer_from(r.task, j.at("answer"), where);
      if (j.contains("bias_types") && !j.at("bias_types").is_null()) r.bias_types = vector_from(j.at("bias_types"), where);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedLine, where, e.what());
    }
  });
  return out;
}

std::string RunManifest::to_json() const {
  ordered_json j;
  j["run_id"] = run_id;
  j["command"] = command;
  j["config_digest"] = config_digest;
  auto files = [](const std::vector<ManifestFile>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  j["template_ids"] = template_ids;
  j["endpoints"] = endpoints;
  j["temperatures"] = temperatures;
  j["timestamps"] = {{"started", started}, {"finished", finished}};
  j["failures"] = ordered_json::array();
  for (const auto& f : failures) j["failures"].push_back({{"sentence_id", f.sentence_id}, {"reason", f.reason}});
  return j.dump(2) + "\n";
}

std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path) {
  std::vector<std::string> problems;
  const auto j = nlohmann::json::parse(detail::read_file(manifest_path));
  const auto dir = manifest_path.parent_path();
  for (const char* section : {"inputs", "outputs"}) {
    for (const auto& f : j.at(section)) {
      const auto p = dir / f.at("path").get<std::string>();
      std::error_code ec;
      if (!std::filesystem::exists(p, ec)) {
        problems.push_back(std::string(section) + ": missing " + p.string());
      } else if (sha256_file(p) != f.at("sha256").get<std::string>()) {
        problems.push_back(std::string(section) + ": digest mismatch " + p.string());
      }
    }
  }
  return problems;
}

}  // namespace debias

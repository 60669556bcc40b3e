#include "debias/prompting.hpp"

#include <nlohmann/json.hpp>

#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "io_util.hpp"
#include "text_util.hpp"

namespace debias {

namespace detail {
extern const std::string_view kBuiltinTemplateZh;
extern const std::string_view kBuiltinTemplateEn;
}  // namespace detail

std::string_view to_string(Task task) noexcept {
  switch (task) {
    case Task::Detect: return "detect";
    case Task::Classify: return "classify";
    case Task::Mitigate: return "mitigate";
  }
  return "";
}

Task parse_task(std::string_view name) {
  if (name == "detect") return Task::Detect;
  if (name == "classify") return Task::Classify;
  if (name == "mitigate") return Task::Mitigate;
  throw Error(Errc::InvalidArgument, std::string(name), "task must be detect, classify or mitigate");
}

std::string_view to_string(Role role) noexcept { return role == Role::System ? "system" : "user"; }

const BiasLexicon& BiasLexicon::english() {
  static const BiasLexicon lexicon{
      {"AC: Gender-stereotyped activities and career choices",
       "DI: Gender-stereotyped descriptions and inductions",
       "ANB: Expressed gender-stereotyped attitudes, norms, and beliefs"},
      "no bias type",
      ", "};
  return lexicon;
}

std::string bias_vector_to_text(const BiasVector& v, const BiasLexicon& lexicon) {
  if (!v.any()) return lexicon.none_phrase;
  std::string out;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v.slot(i)) continue;
    if (!out.empty()) out += lexicon.separator;
    out += lexicon.descriptions[i];
  }
  return out;
}

std::optional<BiasVector> text_to_bias_vector(std::string_view text, const BiasLexicon& lexicon) {
  BiasVector v;
  for (const auto type : kBiasTypes) {
    if (detail::find_bounded(text, code_of(type)) != std::string_view::npos) v.set(type, true);
  }
  if (v.any()) return v;
  const auto lowered = detail::ascii_lower(text);
  for (std::string_view none : {std::string_view(lexicon.none_phrase), std::string_view("no bias type")}) {
    if (!none.empty() && lowered.find(detail::ascii_lower(none)) != std::string::npos) return BiasVector{};
  }
  return std::nullopt;
}

const AnswerLexicon& AnswerLexicon::defaults() {
  static const AnswerLexicon lexicon{
      {"true", "是"},
      {"false", "否", "不是"},
      {"Rewritten sentence:", "Rewritten:", "Rewrite:", "改写后的句子：", "改写后：", "改写："}};
  return lexicon;
}

namespace {

using json = nlohmann::json;

constexpr std::string_view kSentenceSlot = "{sentence}";
constexpr std::string_view kTypesSlot = "{bias_types}";

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

void validate_template(const PromptTemplate& t, std::string_view source) {
  const std::string where = std::string(source) + ":" + std::string(to_string(t.task));
  if (t.role_preamble.empty() || t.task_description.empty() || t.example_format.empty()) {
    throw Error(Errc::InvalidConfig, where, "role_preamble, task_description and example_format are required");
  }
  for (const auto* fixed : {&t.role_preamble, &t.task_description, &t.format_reminder}) {
    if (count_of(*fixed, kSentenceSlot) != 0 || count_of(*fixed, kTypesSlot) != 0) {
      throw Error(Errc::InvalidConfig, where, "placeholders are only allowed in example_format");
    }
  }
  if (count_of(t.example_format, kSentenceSlot) != 1) {
    throw Error(Errc::InvalidConfig, where, "example_format must contain {sentence} exactly once");
  }
  const auto type_slots = count_of(t.example_format, kTypesSlot);
  if (t.task == Task::Mitigate ? type_slots != 1 : type_slots != 0) {
    throw Error(Errc::InvalidConfig, where,
                "{bias_types} must appear exactly once in mitigate templates and nowhere else");
  }
}

std::vector<std::string> string_list(const json& j, const char* key, std::string_view source) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  for (const auto& item : j.at(key)) {
    if (!item.is_string()) throw Error(Errc::InvalidConfig, std::string(source), std::string(key) + " must list strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

TemplateSet TemplateSet::from_json(std::string_view json_text, std::string_view source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string(source), e.what());
  }
  TemplateSet set;
  try {
    set.id_ = j.at("id").get<std::string>();
    set.language_ = j.value("language", "");

    set.bias_lexicon_ = BiasLexicon::english();
    if (j.contains("bias_types")) {
      const auto& b = j.at("bias_types");
      for (const auto type : kBiasTypes) {
        const std::string code(code_of(type));
        if (b.contains(code)) set.bias_lexicon_.descriptions[static_cast<std::size_t>(type)] = b.at(code).get<std::string>();
      }
      set.bias_lexicon_.none_phrase = b.value("none", set.bias_lexicon_.none_phrase);
      set.bias_lexicon_.separator = b.value("separator", set.bias_lexicon_.separator);
    }
    for (const auto type : kBiasTypes) {
      const auto& d = set.bias_lexicon_.descriptions[static_cast<std::size_t>(type)];
      if (detail::find_bounded(d, code_of(type)) == std::string_view::npos) {
        throw Error(Errc::InvalidConfig, std::string(source),
                    "bias type description must contain its code " + std::string(code_of(type)));
      }
    }

    set.answers_ = AnswerLexicon::defaults();
    if (j.contains("answers")) {
      const auto& a = j.at("answers");
      if (a.contains("true")) set.answers_.true_literals = string_list(a, "true", source);
      if (a.contains("false")) set.answers_.false_literals = string_list(a, "false", source);
      if (a.contains("rewrite_labels")) set.answers_.rewrite_labels = string_list(a, "rewrite_labels", source);
    }

    std::array<bool, 3> seen{};
    for (const auto& t : j.at("templates")) {
      PromptTemplate pt;
      pt.task = parse_task(t.at("task").get<std::string>());
      pt.role_preamble = t.at("role_preamble").get<std::string>();
      pt.task_description = t.at("task_description").get<std::string>();
      pt.example_format = t.at("example_format").get<std::string>();
      pt.format_reminder = t.value("format_reminder", "");
      validate_template(pt, source);
      const auto slot = static_cast<std::size_t>(pt.task);
      if (seen[slot]) throw Error(Errc::InvalidConfig, std::string(source), "duplicate template for a task");
      seen[slot] = true;
      set.templates_[slot] = std::move(pt);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      if (!seen[i]) {
        throw Error(Errc::InvalidConfig, std::string(source),
                    "missing template for task " + std::string(to_string(static_cast<Task>(i))));
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string(source), e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidConfig) throw;
    throw Error(Errc::InvalidConfig, std::string(source), e.what());
  }
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
  return from_json(detail::read_file(path), path.string());
}

const TemplateSet& TemplateSet::builtin(std::string_view id) {
  static const TemplateSet zh = from_json(detail::kBuiltinTemplateZh, "builtin:zh-v1");
  static const TemplateSet en = from_json(detail::kBuiltinTemplateEn, "builtin:en-v1");
  if (id == zh.id()) return zh;
  if (id == en.id()) return en;
  throw Error(Errc::InvalidConfig, std::string(id), "unknown built-in template set");
}

std::vector<std::string> TemplateSet::builtin_ids() { return {"zh-v1", "en-v1"}; }

TemplateSet TemplateSet::resolve(std::string_view ref, const std::filesystem::path& base_dir) {
  for (const auto& id : builtin_ids()) {
    if (ref == id) return builtin(id);
  }
  std::filesystem::path p(ref);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return load(p);
}

const PromptTemplate& TemplateSet::for_task(Task task) const {
  return templates_[static_cast<std::size_t>(task)];
}

std::string RenderedPrompt::digest() const {
  json j = json::array();
  for (const auto& m : messages) j.push_back(json::array({std::string(to_string(m.role)), m.content}));
  return sha256_hex(j.dump());
}

const Message& RenderedPrompt::user_message() const {
  for (const auto& m : messages) {
    if (m.role == Role::User) return m;
  }
  throw Error(Errc::InvalidArgument, sentence_id, "prompt has no user message");
}

namespace {

// One left-to-right pass: substituted values are never rescanned, so a
// sentence containing "{bias_types}" is embedded verbatim.
std::string fill_slots(std::string_view format, std::string_view sentence, std::string_view types) {
  std::string out;
  out.reserve(format.size() + sentence.size() + types.size());
  std::size_t pos = 0;
  while (pos < format.size()) {
    if (format.compare(pos, kSentenceSlot.size(), kSentenceSlot) == 0) {
      out += sentence;
      pos += kSentenceSlot.size();
    } else if (format.compare(pos, kTypesSlot.size(), kTypesSlot) == 0) {
      out += types;
      pos += kTypesSlot.size();
    } else {
      out += format[pos++];
    }
  }
  return out;
}

}  // namespace

RenderedPrompt render_prompt(const TemplateSet& templates, Task task, const SentenceRecord& record,
                             const std::optional<BiasVector>& predicted_types) {
  if (task == Task::Mitigate && !predicted_types) {
    throw Error(Errc::MissingTypes, record.id, "mitigation prompts need predicted bias types");
  }
  const auto& t = templates.for_task(task);
  const std::string types =
      task == Task::Mitigate ? bias_vector_to_text(*predicted_types, templates.bias_lexicon()) : std::string();

  RenderedPrompt p;
  p.sentence_id = record.id;
  p.task = task;
  p.template_id = templates.id();
  p.messages.push_back({Role::System, t.role_preamble});
  p.messages.push_back({Role::User, t.task_description + "\n\n" + fill_slots(t.example_format, record.text, types)});
  return p;
}

RenderedPrompt with_format_reminder(const RenderedPrompt& prompt, const TemplateSet& templates) {
  RenderedPrompt out = prompt;
  const auto& reminder = templates.for_task(prompt.task).format_reminder;
  if (reminder.empty()) return out;
  for (auto& m : out.messages) {
    if (m.role == Role::User) m.content += "\n\n" + reminder;
  }
  return out;
}

AnswerFormat expected_answer_format(Task task) {
  switch (task) {
    case Task::Detect: return {AnswerKind::Boolean, {"true", "false"}, "true"};
    case Task::Classify: return {AnswerKind::MultiHot, {}, "[1, 0, 0]"};
    case Task::Mitigate: return {AnswerKind::FreeText, {}, "<rewritten sentence>"};
  }
  return {};
}

}  // namespace debias

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "debias/corpus.hpp"

namespace debias {

enum class Task { Detect, Classify, Mitigate };

std::string_view to_string(Task task) noexcept;
/// "detect" | "classify" | "mitigate". Throws Error(InvalidArgument).
Task parse_task(std::string_view name);

/// Human-readable descriptions of the three bias categories.
struct BiasLexicon {
  std::array<std::string, 3> descriptions;  // each must contain its category code
  std::string none_phrase;
  std::string separator;

  static const BiasLexicon& english();
};

/// Descriptions of the set slots joined in AC, DI, ANB order; the empty
/// vector maps to the lexicon's none phrase ("no bias type" in English).
std::string bias_vector_to_text(const BiasVector& v,
                                const BiasLexicon& lexicon = BiasLexicon::english());

/// Inverse of bias_vector_to_text: maps category codes (AC, DI, ANB as
/// stand-alone words) to slots, and a none phrase to the empty vector.
std::optional<BiasVector> text_to_bias_vector(std::string_view text,
                                              const BiasLexicon& lexicon = BiasLexicon::english());

/// Literals the answer parsers accept.
struct AnswerLexicon {
  std::vector<std::string> true_literals;
  std::vector<std::string> false_literals;
  std::vector<std::string> rewrite_labels;  // leading labels stripped from rewrites

  static const AnswerLexicon& defaults();
};

/// role preamble -> system message; task description and the filled example
/// slot -> user message. The example format carries `{sentence}` exactly
/// once, and `{bias_types}` exactly once for Mitigate.
struct PromptTemplate {
  Task task = Task::Detect;
  std::string role_preamble;
  std::string task_description;
  std::string example_format;
  std::string format_reminder;
};

class TemplateSet {
 public:
  /// Throws Error(InvalidConfig) on schema or placeholder violations.
  static TemplateSet from_json(std::string_view json_text, std::string_view source = "<memory>");
  static TemplateSet load(const std::filesystem::path& path);
  /// "zh-v1" (default) or "en-v1". Throws Error(InvalidConfig) for unknown ids.
  static const TemplateSet& builtin(std::string_view id);
  static std::vector<std::string> builtin_ids();
  /// A built-in id, or a path to a template file (relative to base_dir).
  static TemplateSet resolve(std::string_view ref, const std::filesystem::path& base_dir = {});

  const std::string& id() const noexcept { return id_; }
  const std::string& language() const noexcept { return language_; }
  const PromptTemplate& for_task(Task task) const;
  const BiasLexicon& bias_lexicon() const noexcept { return bias_lexicon_; }
  const AnswerLexicon& answers() const noexcept { return answers_; }

 private:
  std::string id_;
  std::string language_;
  std::array<PromptTemplate, 3> templates_;
  BiasLexicon bias_lexicon_;
  AnswerLexicon answers_;
};

enum class Role { System, User };
std::string_view to_string(Role role) noexcept;

struct Message {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct RenderedPrompt {
  std::vector<Message> messages;
  std::string sentence_id;
  Task task = Task::Detect;
  std::string template_id;

  /// SHA-256 over the ordered (role, content) pairs.
  std::string digest() const;
  const Message& user_message() const;

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

/// Pure. Throws Error(MissingTypes) for Mitigate without predicted types.
RenderedPrompt render_prompt(const TemplateSet& templates, Task task, const SentenceRecord& record,
                             const std::optional<BiasVector>& predicted_types = std::nullopt);

/// The same prompt with the template's stricter format reminder appended to
/// the user message; used for the single re-ask after a parse failure.
RenderedPrompt with_format_reminder(const RenderedPrompt& prompt, const TemplateSet& templates);

enum class AnswerKind { Boolean, MultiHot, FreeText };

struct AnswerFormat {
  AnswerKind kind = AnswerKind::FreeText;
  std::vector<std::string> literals;  // Boolean only
  std::string example;
};

AnswerFormat expected_answer_format(Task task);

}  // namespace debias

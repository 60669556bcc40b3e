#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "debias/corpus.hpp"
#include "debias/error.hpp"
#include "debias/prompting.hpp"

namespace debias {

struct GenerationConfig {
  std::string endpoint_id;
  double temperature = 0.1;
  std::optional<double> top_p;  // unset: not sent on the wire
  int max_output_tokens = 512;
  int retry_limit = 2;  // retries after the first attempt
  std::chrono::milliseconds timeout{30000};

  /// Throws Error(InvalidConfig).
  void validate() const;
};

struct RawCompletion {
  std::string text;  // verbatim, including malformed output
  std::string endpoint_id;
  std::chrono::milliseconds latency{0};
  int attempt = 1;

  friend bool operator==(const RawCompletion&, const RawCompletion&) = default;
};

using Answer = std::variant<bool, BiasVector, std::string>;

struct ExpertPrediction {
  int expert_id = 0;
  std::string sentence_id;
  Task task = Task::Detect;
  double temperature = 0.0;
  std::optional<Answer> answer;      // absent unless parse_ok
  std::optional<RawCompletion> raw;  // absent only when the endpoint never answered
  bool parse_ok = false;
  std::string error;  // why the expert abstains, when it does
};

/// One request/response exchange with a chat-completion endpoint. Throws
/// BackendError(EndpointUnreachable | Timeout); callers own retrying.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual RawCompletion call(const RenderedPrompt& prompt, const GenerationConfig& cfg) = 0;
  /// Failures of this kind are never retried (e.g. authentication errors).
  static bool is_retryable(const BackendError& e) noexcept;
};

/// First successful completion within 1 + retry_limit attempts. Throws
/// BackendError(RetriesExhausted) once every attempt failed, or passes a
/// non-retryable failure through unchanged.
RawCompletion complete(ChatBackend& backend, const RenderedPrompt& prompt, const GenerationConfig& cfg);

/// Deterministic stand-in for the fine-tuned experts. Every answer is a pure
/// function of (key, endpoint, prompt digest, temperature band), optionally
/// informed by a gold fixture so evaluation numbers are meaningful.
class MockBackend final : public ChatBackend {
 public:
  struct Options {
    std::string key = "debias-mock";
    std::map<std::string, double> accuracy;  // per endpoint id
    double default_accuracy = 0.8;
    double malformed_rate = 0.0;
    /// Exact replies keyed by prompt digest, consulted first.
    std::map<std::string, std::string> scripted;
  };

  explicit MockBackend(Options options, const Dataset* gold = nullptr);

  RawCompletion call(const RenderedPrompt& prompt, const GenerationConfig& cfg) override;

  /// Temperatures are bucketed to 1e-3 before hashing.
  static std::int64_t temperature_band(double temperature) noexcept;

 private:
  Options options_;
  const Dataset* gold_;
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
};

/// Chat-completions over HTTP(S): request {model, messages, temperature,
/// max_tokens[, top_p]}, answer at choices[0].message.content.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(HttpEndpoint endpoint);

  RawCompletion call(const RenderedPrompt& prompt, const GenerationConfig& cfg) override;

  /// The exact JSON body sent for (prompt, cfg).
  std::string request_body(const RenderedPrompt& prompt, const GenerationConfig& cfg) const;

 private:
  HttpEndpoint endpoint_;
};

/// Environment variable holding the bearer token.
inline constexpr const char* kApiKeyEnv = "DEBIAS_API_KEY";

// Answer parsers. Each returns a valid answer or throws Error(ParseFailure).

/// First boolean literal in the text wins; ASCII literals match
/// case-insensitively on word boundaries.
bool parse_detection(const RawCompletion& raw, const AnswerLexicon& lexicon = AnswerLexicon::defaults());
/// First three-element integer vector literal, which must be 0/1; otherwise
/// AC/DI/ANB mentions.
BiasVector parse_classification(const RawCompletion& raw, const BiasLexicon& lexicon = BiasLexicon::english());
/// Drops template echoes, leading labels ("改写：") and wrapping quotes.
std::string parse_mitigation(const RawCompletion& raw, const AnswerLexicon& lexicon = AnswerLexicon::defaults());

/// Dispatches on task using a template set's lexicons.
Answer parse_answer(Task task, const RawCompletion& raw, const TemplateSet& templates);

struct CacheKey {
  int expert_id = 0;
  Task task = Task::Detect;
  std::string sentence_id;
  double temperature = 0.0;
  std::string prompt_digest;

  std::string canonical() const;
};

/// Content-addressed, one file per key. Concurrent lookups are safe; stores
/// are serialised and land atomically.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<RawCompletion> lookup(const CacheKey& key) const;
  /// Throws Error(IoFailure).
  void store(const CacheKey& key, const RawCompletion& completion);

  std::filesystem::path path_for(const CacheKey& key) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::mutex write_mutex_;
};

}  // namespace debias

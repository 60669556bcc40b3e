#include "debias/backend.hpp"

#include <cmath>

#include "debias/error.hpp"

namespace debias {

void GenerationConfig::validate() const {
  if (!std::isfinite(temperature) || temperature < 0.0) {
    throw Error(Errc::InvalidConfig, endpoint_id, "temperature must be a non-negative number");
  }
  if (retry_limit < 0) throw Error(Errc::InvalidConfig, endpoint_id, "retry_limit must be >= 0");
  if (max_output_tokens <= 0) throw Error(Errc::InvalidConfig, endpoint_id, "max_output_tokens must be > 0");
  if (timeout.count() <= 0) throw Error(Errc::InvalidConfig, endpoint_id, "timeout must be positive");
  if (top_p && !(*top_p > 0.0 && *top_p <= 1.0)) {
    throw Error(Errc::InvalidConfig, endpoint_id, "top_p must lie in (0, 1]");
  }
}

bool ChatBackend::is_retryable(const BackendError& e) noexcept {
  return e.code() == Errc::Timeout || e.code() == Errc::EndpointUnreachable;
}

RawCompletion complete(ChatBackend& backend, const RenderedPrompt& prompt, const GenerationConfig& cfg) {
  cfg.validate();
  const int attempts = cfg.retry_limit + 1;
  std::string last;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      RawCompletion out = backend.call(prompt, cfg);
      out.attempt = attempt;
      if (out.endpoint_id.empty()) out.endpoint_id = cfg.endpoint_id;
      return out;
    } catch (const BackendError& e) {
      if (!ChatBackend::is_retryable(e)) throw;
      last = e.what();
    }
  }
  throw BackendError(Errc::RetriesExhausted, cfg.endpoint_id, prompt.sentence_id,
                     std::to_string(attempts) + " attempt(s) failed; last: " + last);
}

}  // namespace debias

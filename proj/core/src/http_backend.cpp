#include <httplib.h>

#include <nlohmann/json.hpp>

#include "debias/backend.hpp"
#include "debias/error.hpp"

namespace debias {

HttpBackend::HttpBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.base_url.empty()) throw Error(Errc::InvalidConfig, "base_url", "HTTP endpoint needs a base URL");
}

std::string HttpBackend::request_body(const RenderedPrompt& prompt, const GenerationConfig& cfg) const {
  nlohmann::ordered_json body;
  body["model"] = endpoint_.model.empty() ? cfg.endpoint_id : endpoint_.model;
  body["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : prompt.messages) {
    body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  body["temperature"] = cfg.temperature;
  body["max_tokens"] = cfg.max_output_tokens;
  if (cfg.top_p) body["top_p"] = *cfg.top_p;
  return body.dump();
}

RawCompletion HttpBackend::call(const RenderedPrompt& prompt, const GenerationConfig& cfg) {
  httplib::Client client(endpoint_.base_url);
  client.set_connection_timeout(cfg.timeout);
  client.set_read_timeout(cfg.timeout);
  client.set_write_timeout(cfg.timeout);

  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(endpoint_.path, headers, request_body(prompt, cfg), "application/json");
  const auto latency =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
    throw BackendError(timed_out ? Errc::Timeout : Errc::EndpointUnreachable, cfg.endpoint_id, prompt.sentence_id,
                       httplib::to_string(err));
  }
  if (res->status == 429 || res->status >= 500) {
    throw BackendError(Errc::EndpointUnreachable, cfg.endpoint_id, prompt.sentence_id,
                       "HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw BackendError(Errc::InvalidConfig, cfg.endpoint_id, prompt.sentence_id,
                       "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }

  RawCompletion out;
  out.endpoint_id = cfg.endpoint_id;
  out.latency = latency;
  try {
    const auto j = nlohmann::json::parse(res->body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(Errc::EndpointUnreachable, cfg.endpoint_id, prompt.sentence_id,
                       std::string("malformed response body: ") + e.what());
  }
  return out;
}

}  // namespace debias

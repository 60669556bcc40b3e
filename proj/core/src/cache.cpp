#include <fmt/format.h>

#include <nlohmann/json.hpp>
#include <system_error>

#include "debias/backend.hpp"
#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "io_util.hpp"

namespace debias {

std::string CacheKey::canonical() const {
  // %.17g keeps every distinct double distinct.
  return fmt::format("v1|expert={}|task={}|sentence={}|temperature={:.17g}|prompt={}", expert_id, to_string(task),
                     sentence_id, temperature, prompt_digest);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::path_for(const CacheKey& key) const {
  const auto h = sha256_hex(key.canonical());
  return dir_ / h.substr(0, 2) / (h + ".json");
}

std::optional<RawCompletion> ResponseCache::lookup(const CacheKey& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(detail::read_file(path));
    if (j.at("key").get<std::string>() != key.canonical()) return std::nullopt;
    RawCompletion c;
    c.text = j.at("text").get<std::string>();
    c.endpoint_id = j.at("endpoint_id").get<std::string>();
    c.latency = std::chrono::milliseconds(j.at("latency_ms").get<long long>());
    c.attempt = j.at("attempt").get<int>();
    return c;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // unreadable entries are treated as misses and overwritten
  }
}

void ResponseCache::store(const CacheKey& key, const RawCompletion& completion) {
  nlohmann::ordered_json j;
  j["key"] = key.canonical();
  j["text"] = completion.text;
  j["endpoint_id"] = completion.endpoint_id;
  j["latency_ms"] = completion.latency.count();
  j["attempt"] = completion.attempt;
  std::lock_guard lock(write_mutex_);
  detail::write_file_atomic(path_for(key), j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

}  // namespace debias

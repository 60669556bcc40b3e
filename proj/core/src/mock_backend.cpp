#include <cmath>
#include <random>

#include "debias/backend.hpp"
#include "debias/digest.hpp"
#include "debias/error.hpp"

namespace debias {

namespace {

class HashStream {
 public:
  explicit HashStream(std::string_view material) : gen_(seed_from(sha256_hex(material))) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t seed_from(const std::string& hex) { return std::stoull(hex.substr(0, 16), nullptr, 16); }
  std::mt19937_64 gen_;
};

std::vector<std::string_view> code_points(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string perturb(std::string_view base, double temperature, HashStream& rng) {
  const double edit = std::min(0.6, 0.02 + 0.5 * temperature);
  std::string out;
  for (const auto cp : code_points(base)) {
    const double r = rng.uniform();
    if (r < edit / 2) continue;
    out += cp;
    if (r < edit) out += cp;
  }
  if (out.empty()) out = std::string(base);
  return out;
}

}  // namespace

MockBackend::MockBackend(Options options, const Dataset* gold) : options_(std::move(options)), gold_(gold) {}

std::int64_t MockBackend::temperature_band(double temperature) noexcept {
  return std::llround(temperature * 1000.0);
}

RawCompletion MockBackend::call(const RenderedPrompt& prompt, const GenerationConfig& cfg) {
  RawCompletion out;
  out.endpoint_id = cfg.endpoint_id;
  const auto digest = prompt.digest();
  if (const auto it = options_.scripted.find(digest); it != options_.scripted.end()) {
    out.text = it->second;
    return out;
  }

  HashStream rng(options_.key + '\x1f' + cfg.endpoint_id + '\x1f' + digest + '\x1f' +
                 std::to_string(temperature_band(cfg.temperature)));
  const auto acc_it = options_.accuracy.find(cfg.endpoint_id);
  const double accuracy = acc_it == options_.accuracy.end() ? options_.default_accuracy : acc_it->second;
  const SentenceRecord* gold = gold_ ? gold_->find(prompt.sentence_id) : nullptr;

  if (rng.uniform() < options_.malformed_rate) {
    out.text = prompt.task == Task::Mitigate ? "" : "我不确定。";
    return out;
  }

  switch (prompt.task) {
    case Task::Detect: {
      const bool truth = gold ? gold->label == Label::Biased : rng.uniform() < 0.5;
      const bool answer = rng.uniform() < accuracy ? truth : !truth;
      const double style = rng.uniform();
      const std::string lit = answer ? "true" : "false";
      out.text = style < 0.6 ? lit : style < 0.8 ? "答案：" + lit : "The answer is " + lit + ".";
      break;
    }
    case Task::Classify: {
      BiasVector truth = gold && gold->bias_types ? *gold->bias_types
                                                  : BiasVector::from_mask(1U + static_cast<unsigned>(rng.uniform() * 7.0));
      BiasVector answer;
      for (std::size_t i = 0; i < 3; ++i) {
        answer.set_slot(i, rng.uniform() < accuracy ? truth.slot(i) : !truth.slot(i));
      }
      out.text = rng.uniform() < 0.7 ? to_string(answer) : "偏见类型：" + to_string(answer);
      break;
    }
    case Task::Mitigate: {
      std::string base;
      if (gold) base = gold->reference.value_or(gold->text);
      else base = prompt.user_message().content;
      const auto rewrite = perturb(base, cfg.temperature, rng);
      out.text = rng.uniform() < 0.3 ? "改写：" + rewrite : rewrite;
      break;
    }
  }
  return out;
}

}  // namespace debias

#include <array>
#include <utility>

#include "debias/backend.hpp"
#include "debias/error.hpp"
#include "text_util.hpp"

namespace debias {

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

[[noreturn]] void parse_failure(const RawCompletion& raw, std::string_view what) {
  std::string excerpt = raw.text.substr(0, 80);
  throw Error(Errc::ParseFailure, raw.endpoint_id, std::string(what) + " in \"" + excerpt + "\"");
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && detail::ascii_lower(s.substr(0, prefix.size())) == detail::ascii_lower(prefix);
}

}  // namespace

bool parse_detection(const RawCompletion& raw, const AnswerLexicon& lexicon) {
  const auto text = detail::ascii_lower(raw.text);
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  bool best_value = false;
  auto scan = [&](const std::vector<std::string>& literals, bool value) {
    for (const auto& lit : literals) {
      const auto pos = detail::find_bounded(text, detail::ascii_lower(lit));
      if (pos == std::string::npos) continue;
      if (pos < best_pos || (pos == best_pos && lit.size() > best_len)) {
        best_pos = pos;
        best_len = lit.size();
        best_value = value;
      }
    }
  };
  scan(lexicon.true_literals, true);
  scan(lexicon.false_literals, false);
  if (best_pos == std::string::npos) parse_failure(raw, "no boolean literal");
  return best_value;
}

BiasVector parse_classification(const RawCompletion& raw, const BiasLexicon& lexicon) {
  std::string text = raw.text;
  for (const auto& [wide, narrow] : std::array<std::pair<std::string_view, std::string_view>, 4>{
           {{"［", "["}, {"］", "]"}, {"，", ","}, {"、", ","}}}) {
    text = replace_all(std::move(text), wide, narrow);
  }

  for (auto open = text.find('['); open != std::string::npos; open = text.find('[', open + 1)) {
    const auto close = text.find(']', open);
    if (close == std::string::npos) break;
    const std::string_view body(text.data() + open + 1, close - open - 1);
    std::vector<long long> values;
    bool numeric = true;
    std::size_t pos = 0;
    while (numeric && pos <= body.size()) {
      auto comma = body.find(',', pos);
      if (comma == std::string_view::npos) comma = body.size();
      const auto item = detail::trim(body.substr(pos, comma - pos));
      bool digits = !item.empty() && item.size() <= 6;
      for (std::size_t i = 0; digits && i < item.size(); ++i) {
        digits = (item[i] >= '0' && item[i] <= '9') || (i == 0 && item[i] == '-' && item.size() > 1);
      }
      if (!digits) {
        numeric = false;
        break;
      }
      values.push_back(std::stoll(std::string(item)));
      pos = comma + 1;
      if (comma == body.size()) break;
    }
    if (!numeric || values.size() != 3) continue;
    BiasVector v;
    for (std::size_t i = 0; i < 3; ++i) {
      if (values[i] != 0 && values[i] != 1) parse_failure(raw, "multi-hot slot outside {0, 1}");
      v.set_slot(i, values[i] == 1);
    }
    return v;
  }

  if (auto v = text_to_bias_vector(raw.text, lexicon)) return *v;
  parse_failure(raw, "no multi-hot vector or bias type name");
}

std::string parse_mitigation(const RawCompletion& raw, const AnswerLexicon& lexicon) {
  std::string_view text = detail::trim(raw.text);

  // A template echo ("原句：...\n改写：...") keeps only what follows the last
  // line that opens with a rewrite label.
  std::size_t line_start = 0;
  std::string_view chosen = text;
  while (line_start < text.size()) {
    auto nl = text.find('\n', line_start);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = detail::trim(text.substr(line_start, nl - line_start));
    for (const auto& label : lexicon.rewrite_labels) {
      if (starts_with_ci(line, label)) {
        const auto offset = static_cast<std::size_t>(line.data() - text.data()) + label.size();
        chosen = text.substr(offset);
        break;
      }
    }
    line_start = nl + 1;
  }

  std::string_view s = detail::trim(chosen);
  for (bool stripped = true; stripped;) {
    stripped = false;
    for (const auto& label : lexicon.rewrite_labels) {
      if (starts_with_ci(s, label)) {
        s = detail::trim(s.substr(label.size()));
        stripped = true;
      }
    }
  }
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kQuotes{
      {{"\"", "\""}, {"“", "”"}, {"「", "」"}, {"『", "』"}, {"‘", "’"}}};
  for (const auto& [open, close] : kQuotes) {
    if (s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
        s.substr(s.size() - close.size()) == close) {
      s = detail::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
      break;
    }
  }
  if (s.empty()) parse_failure(raw, "empty rewrite");
  return std::string(s);
}

Answer parse_answer(Task task, const RawCompletion& raw, const TemplateSet& templates) {
  switch (task) {
    case Task::Detect: return parse_detection(raw, templates.answers());
    case Task::Classify: return parse_classification(raw, templates.bias_lexicon());
    case Task::Mitigate: return parse_mitigation(raw, templates.answers());
  }
  parse_failure(raw, "unknown task");
}

}  // namespace debias

#include <unicode/brkiter.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <memory>

#include "debias/error.hpp"
#include "debias/metrics.hpp"

namespace debias {

namespace {

bool all_whitespace(const icu::UnicodeString& s) {
  for (int32_t i = 0; i < s.length();) {
    const UChar32 c = s.char32At(i);
    if (!u_isUWhiteSpace(c)) return false;
    i += U16_LENGTH(c);
  }
  return true;
}

icu::BreakIterator& grapheme_iterator() {
  thread_local std::unique_ptr<icu::BreakIterator> it = [] {
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::BreakIterator> bi(icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
    if (U_FAILURE(status) || !bi) throw Error(Errc::InvalidConfig, "icu", u_errorName(status));
    return bi;
  }();
  return *it;
}

}  // namespace

TokenSequence tokenize(std::string_view utf8, Granularity granularity) {
  TokenSequence out;
  out.granularity = granularity;
  const auto text = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));

  if (granularity == Granularity::Character) {
    auto& bi = grapheme_iterator();
    bi.setText(text);
    int32_t start = bi.first();
    for (int32_t end = bi.next(); end != icu::BreakIterator::DONE; start = end, end = bi.next()) {
      const icu::UnicodeString cluster(text, start, end - start);
      if (all_whitespace(cluster)) continue;
      std::string token;
      cluster.toUTF8String(token);
      out.tokens.push_back(std::move(token));
    }
    return out;
  }

  icu::UnicodeString current;
  auto flush = [&] {
    if (current.isEmpty()) return;
    std::string token;
    current.toUTF8String(token);
    out.tokens.push_back(std::move(token));
    current.remove();
  };
  for (int32_t i = 0; i < text.length();) {
    const UChar32 c = text.char32At(i);
    if (u_isUWhiteSpace(c)) flush();
    else current.append(c);
    i += U16_LENGTH(c);
  }
  flush();
  return out;
}

}  // namespace debias

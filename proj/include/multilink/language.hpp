#pragma once

#include <array>
#include <string>
#include <string_view>

#include "multilink/errors.hpp"

namespace multilink {

enum class Language { EN, ZH, FR, DE, JA, RU };

inline constexpr std::array<Language, 6> kAllLanguages = {
    Language::EN, Language::ZH, Language::FR,
    Language::DE, Language::JA, Language::RU};

constexpr std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::EN: return "EN";
    case Language::ZH: return "ZH";
    case Language::FR: return "FR";
    case Language::DE: return "DE";
    case Language::JA: return "JA";
    case Language::RU: return "RU";
  }
  return "EN";
}

inline Language language_from_string(std::string_view s) {
  for (Language lang : kAllLanguages) {
    if (s == to_string(lang)) return lang;
  }
  throw Error("unknown language tag \"" + std::string(s) + "\"");
}

}  // namespace multilink

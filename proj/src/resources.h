#pragma once

#include <string_view>

// Data files compiled into the library (see cmake/EmbedResources.cmake).
namespace sentinel::resources {

extern const std::string_view kLexiconTsv;
extern const std::string_view kLemmaExceptionsTsv;
extern const std::string_view kThesaurusTsv;
extern const std::string_view kDefaultRulePackJson;

}  // namespace sentinel::resources

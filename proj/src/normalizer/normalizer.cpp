#include "sentinel/normalizer.h"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "resources.h"
#include "sentinel/errors.h"

namespace sentinel::text {
namespace {

constexpr unsigned char kAnyPos = Lemmatizer::kNoun | Lemmatizer::kVerb |
                                  Lemmatizer::kAdjective | Lemmatizer::kAdverb;

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

bool is_ascii_alpha_lower(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](char c) { return c >= 'a' && c <= 'z'; });
}

bool is_separator_punct(UChar32 c) {
  const auto mask = U_GET_GC_MASK(c);
  return (mask & (U_GC_P_MASK | U_GC_S_MASK)) != 0;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// "hitt" -> true: a doubled final consonant left behind by -ing/-ed/-er.
bool has_doubled_consonant(std::string_view stem) {
  if (stem.size() < 3) return false;
  const char last = stem.back();
  return last == stem[stem.size() - 2] && !is_vowel(last) && last != 'l' &&
         last != 's' && last != 'f' && last != 'z';
}

// "hop" -> true. An undoubled consonant after a short vowel means the base
// dropped a silent e ("hoping" comes from "hope", "hopping" from "hop").
bool ends_cvc(std::string_view stem) {
  if (stem.size() < 3) return false;
  const char c2 = stem[stem.size() - 1];
  const char v = stem[stem.size() - 2];
  const char c1 = stem[stem.size() - 3];
  return !is_vowel(c2) && c2 != 'w' && c2 != 'x' && c2 != 'y' && is_vowel(v) &&
         !is_vowel(c1);
}

template <typename Fn>
void for_each_tsv_line(std::string_view data, Fn&& fn) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    if (end == std::string_view::npos) end = data.size();
    std::string_view line = data.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0 || tab + 1 >= line.size()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected `key<TAB>value`");
    }
    fn(line.substr(0, tab), line.substr(tab + 1));
  }
}

std::string utf8_case_map(std::string_view text, bool upper) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (upper) {
    u.toUpper(icu::Locale::getRoot());
  } else {
    u.toLower(icu::Locale::getRoot());
  }
  std::string out;
  u.toUTF8String(out);
  return out;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());

  int32_t word_start = -1;
  auto flush_word = [&](int32_t end) {
    if (word_start >= 0) {
      tokens.push_back(Token{std::string(text.substr(word_start, end - word_start)),
                             {}, false, static_cast<std::size_t>(word_start)});
      word_start = -1;
    }
  };

  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c >= 0 && u_isUWhiteSpace(c)) {
      flush_word(start);
    } else if (c >= 0 && is_separator_punct(c)) {
      flush_word(start);
      tokens.push_back(Token{std::string(text.substr(start, i - start)), {}, true,
                             static_cast<std::size_t>(start)});
    } else if (word_start < 0) {
      word_start = start;
    }
  }
  flush_word(length);
  return tokens;
}

std::string to_nfc(std::string_view text) {
  if (is_ascii(text)) return std::string(text);
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(std::string("ICU NFC normalizer unavailable: ") + u_errorName(status));
  }
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfc->normalize(u, status);
  if (U_FAILURE(status)) {
    throw Error(std::string("NFC normalization failed: ") + u_errorName(status));
  }
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string to_lower(std::string_view text) {
  if (is_ascii(text)) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
      return static_cast<char>(c >= 'A' && c <= 'Z' ? c + ('a' - 'A') : c);
    });
    return out;
  }
  return utf8_case_map(text, false);
}

std::string to_upper(std::string_view text) {
  if (is_ascii(text)) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
      return static_cast<char>(c >= 'a' && c <= 'z' ? c - ('a' - 'A') : c);
    });
    return out;
  }
  return utf8_case_map(text, true);
}

// ---------------------------------------------------------------------------
// Lemmatizer

Lemmatizer::Lemmatizer(std::string_view lexicon_tsv, std::string_view exceptions_tsv) {
  lexicon_.reserve(80000);
  for_each_tsv_line(lexicon_tsv, [&](std::string_view word, std::string_view tags) {
    unsigned char mask = 0;
    for (char t : tags) {
      switch (t) {
        case 'n': mask |= kNoun; break;
        case 'v': mask |= kVerb; break;
        case 'a': mask |= kAdjective; break;
        case 'r': mask |= kAdverb; break;
        default:
          throw ParseError("lexicon: unknown part-of-speech tag in entry '" +
                           std::string(word) + "'");
      }
    }
    lexicon_[to_lower(word)] |= mask;
  });
  for_each_tsv_line(exceptions_tsv, [&](std::string_view surface, std::string_view lemma) {
    exceptions_[to_lower(surface)] = to_lower(lemma);
  });
}

std::shared_ptr<const Lemmatizer> Lemmatizer::builtin() {
  static const auto instance = std::make_shared<const Lemmatizer>(
      resources::kLexiconTsv, resources::kLemmaExceptionsTsv);
  return instance;
}

std::shared_ptr<const Lemmatizer> Lemmatizer::with_exceptions_file(
    const std::filesystem::path& exceptions_path) {
  std::ifstream in(exceptions_path, std::ios::binary);
  if (!in) {
    throw DataError("cannot read lemma exception table: " + exceptions_path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return std::make_shared<const Lemmatizer>(resources::kLexiconTsv, buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(exceptions_path.string() + ": " + e.what());
  }
}

bool Lemmatizer::in_lexicon(std::string_view word) const {
  return lexicon_.contains(std::string(word));
}

bool Lemmatizer::has_pos(const std::string& word, unsigned char mask) const {
  const auto it = lexicon_.find(word);
  return it != lexicon_.end() && (it->second & mask) != 0;
}

std::string Lemmatizer::lemmatize_once(const std::string& lower) const {
  if (const auto it = exceptions_.find(lower); it != exceptions_.end()) {
    return it->second;
  }
  if (!is_ascii_alpha_lower(lower) || lower.size() < 4) return lower;

  auto known = [&](const std::string& candidate, unsigned char mask = kAnyPos) {
    return candidate.size() >= 3 && has_pos(candidate, mask);
  };
  const std::string_view w = lower;

  // Plurals and third person singular.
  if (ends_with(w, "ies") && w.size() > 4) {
    std::string c = std::string(w.substr(0, w.size() - 3)) + "y";
    if (known(c)) return c;
  }
  if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is")) {
    const std::string strip_s(w.substr(0, w.size() - 1));
    const std::string strip_es(w.substr(0, w.size() - 2));
    const bool sibilant = ends_with(w, "ses") || ends_with(w, "xes") ||
                          ends_with(w, "zes") || ends_with(w, "ches") ||
                          ends_with(w, "shes");
    if (sibilant && ends_with(w, "es") && known(strip_es)) return strip_es;
    if (known(strip_s)) return strip_s;
    if (ends_with(w, "es") && known(strip_es)) return strip_es;
  }

  // Progressive.
  if (ends_with(w, "ing") && w.size() >= 5) {
    const std::string stem(w.substr(0, w.size() - 3));
    if (ends_cvc(stem) && known(stem + "e", kVerb)) return stem + "e";
    if (known(stem, kVerb)) return stem;
    if (known(stem + "e", kVerb)) return stem + "e";
    if (has_doubled_consonant(stem) && known(stem.substr(0, stem.size() - 1), kVerb)) {
      return stem.substr(0, stem.size() - 1);
    }
  }

  // Past tense and participles.
  if (ends_with(w, "ied") && w.size() > 4) {
    std::string c = std::string(w.substr(0, w.size() - 3)) + "y";
    if (known(c)) return c;
  }
  if (ends_with(w, "ed") && w.size() >= 5) {
    const std::string strip_d(w.substr(0, w.size() - 1));
    const std::string stem(w.substr(0, w.size() - 2));
    if (strip_d.size() >= 4 && known(strip_d, kVerb)) return strip_d;
    if (known(stem, kVerb)) return stem;
    if (has_doubled_consonant(stem) && known(stem.substr(0, stem.size() - 1), kVerb)) {
      return stem.substr(0, stem.size() - 1);
    }
  }

  // Comparatives and superlatives: only unknown words, adjective bases.
  if (!lexicon_.contains(lower)) {
    for (std::string_view suffix : {std::string_view("est"), std::string_view("er")}) {
      if (!ends_with(w, suffix) || w.size() < suffix.size() + 3) continue;
      const std::string stem(w.substr(0, w.size() - suffix.size()));
      if (stem.back() == 'i') {
        std::string c = stem.substr(0, stem.size() - 1) + "y";
        if (known(c, kAdjective)) return c;
      }
      if (known(stem, kAdjective)) return stem;
      if (known(stem + "e", kAdjective)) return stem + "e";
      if (has_doubled_consonant(stem) &&
          known(stem.substr(0, stem.size() - 1), kAdjective)) {
        return stem.substr(0, stem.size() - 1);
      }
    }
  }
  return lower;
}

std::string Lemmatizer::lemmatize(std::string_view surface) const {
  std::string current = to_lower(surface);
  for (int i = 0; i < 8; ++i) {
    std::string next = lemmatize_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer::Normalizer() : lemmatizer_(Lemmatizer::builtin()) {}

Normalizer::Normalizer(std::shared_ptr<const Lemmatizer> lemmatizer)
    : lemmatizer_(std::move(lemmatizer)) {
  if (!lemmatizer_) lemmatizer_ = Lemmatizer::builtin();
}

NormalizedText Normalizer::normalize(std::string_view text) const {
  NormalizedText out;
  out.source = to_nfc(text);
  out.tokens = tokenize(out.source);
  for (Token& token : out.tokens) {
    token.lemma = token.is_punct ? to_lower(token.surface)
                                 : lemmatizer_->lemmatize(token.surface);
  }
  return out;
}

NormalizedText normalize(std::string_view text) {
  static const Normalizer instance;
  return instance.normalize(text);
}

}  // namespace sentinel::text

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sentinel::text {

struct Token {
  std::string surface;
  std::string lemma;  // empty until lemmatized
  bool is_punct = false;
  std::size_t byte_offset = 0;

  bool operator==(const Token&) const = default;
};

struct NormalizedText {
  std::string source;  // NFC form of the input; token offsets index into it
  std::vector<Token> tokens;

  bool empty() const noexcept { return tokens.empty(); }
  bool operator==(const NormalizedText&) const = default;
};

// Splits UTF-8 text on Unicode whitespace. Every punctuation or symbol code
// point becomes its own token; everything else accumulates into word tokens.
// Invalid UTF-8 bytes are treated as word characters.
std::vector<Token> tokenize(std::string_view text);

// Canonical composition (NFC). Invalid UTF-8 is replaced with U+FFFD.
std::string to_nfc(std::string_view text);

// Full Unicode lowercase mapping (root locale).
std::string to_lower(std::string_view text);

// Full Unicode uppercase mapping (root locale).
std::string to_upper(std::string_view text);

// Rule-based English lemmatizer.
//
// Words are lowercased, then resolved in order:
//   1. the exception table (irregular forms, plus base forms that merely look
//      inflected, such as "news" or "morning");
//   2. suffix rules (-ies, -es, -s, -ing, -ed, -er, -est), each accepted only
//      when the candidate base form is in the lexicon;
//   3. otherwise the lowercased word itself.
// The result is iterated to a fixed point, so lemmatize is idempotent.
class Lemmatizer {
 public:
  enum PartOfSpeech : unsigned char {
    kNoun = 1 << 0,
    kVerb = 1 << 1,
    kAdjective = 1 << 2,
    kAdverb = 1 << 3,
  };

  // Lexicon lines: `word<TAB>tags` where tags is any of "nvar".
  // Exception lines: `surface<TAB>lemma`. Blank lines and `#` comments skip.
  Lemmatizer(std::string_view lexicon_tsv, std::string_view exceptions_tsv);

  // Bundled lexicon and exception table.
  static std::shared_ptr<const Lemmatizer> builtin();

  // Bundled lexicon with an exception table read from `exceptions_path`.
  static std::shared_ptr<const Lemmatizer> with_exceptions_file(
      const std::filesystem::path& exceptions_path);

  std::string lemmatize(std::string_view surface) const;
  std::string lemmatize(const Token& token) const {
    return lemmatize(token.surface);
  }

  bool in_lexicon(std::string_view word) const;
  std::size_t lexicon_size() const noexcept { return lexicon_.size(); }
  std::size_t exception_count() const noexcept { return exceptions_.size(); }

 private:
  std::string lemmatize_once(const std::string& lower) const;
  bool has_pos(const std::string& word, unsigned char mask) const;

  std::unordered_map<std::string, unsigned char> lexicon_;
  std::unordered_map<std::string, std::string> exceptions_;
};

// tokenize -> lemmatize -> lowercase, over the NFC form of the input.
class Normalizer {
 public:
  Normalizer();  // builtin lemmatizer
  explicit Normalizer(std::shared_ptr<const Lemmatizer> lemmatizer);

  NormalizedText normalize(std::string_view text) const;
  const Lemmatizer& lemmatizer() const noexcept { return *lemmatizer_; }

 private:
  std::shared_ptr<const Lemmatizer> lemmatizer_;
};

// Convenience wrapper over a process-wide builtin Normalizer.
NormalizedText normalize(std::string_view text);

}  // namespace sentinel::text

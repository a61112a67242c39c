#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sentinel/normalizer.h"

namespace sentinel::rules {

// Keyword rule: fires when any non-punctuation lemma of the text is a member
// of `synonym_set`. All entries are lowercase lemmas and synonym_set always
// contains every seed keyword.
struct SemanticRule {
  std::string name;
  std::vector<std::string> seed_keywords;
  std::set<std::string> synonym_set;

  bool operator==(const SemanticRule&) const = default;
};

enum class StructuralKind {
  kQaPairs,
  kConsecutiveRepeat,
};

std::string_view to_string(StructuralKind kind);
// Throws ConfigError for unknown names.
StructuralKind parse_structural_kind(std::string_view name);

// Structure rule: fires when its matcher's count reaches `threshold`
// (inclusive).
struct StructuralRule {
  std::string name;
  StructuralKind kind = StructuralKind::kQaPairs;
  int threshold = 1;

  bool operator==(const StructuralRule&) const = default;
};

// Ordered rule set. Semantic rules come first, then structural ones; that
// order is the feature-vector layout. Immutable once constructed.
class RulePack {
 public:
  // Throws ConfigError listing every violated invariant.
  RulePack(std::string version, std::vector<SemanticRule> semantic,
           std::vector<StructuralRule> structural);

  const std::string& version() const noexcept { return version_; }
  const std::vector<SemanticRule>& semantic() const noexcept { return semantic_; }
  const std::vector<StructuralRule>& structural() const noexcept { return structural_; }

  std::size_t size() const noexcept { return semantic_.size() + structural_.size(); }
  // Feature names in vector-layout order.
  std::vector<std::string> names() const;

  bool operator==(const RulePack&) const = default;

 private:
  std::string version_;
  std::vector<SemanticRule> semantic_;
  std::vector<StructuralRule> structural_;
};

// Returns every invariant violation; empty when the pack is valid.
std::vector<std::string> check_invariants(const std::string& version,
                                          const std::vector<SemanticRule>& semantic,
                                          const std::vector<StructuralRule>& structural);

// JSON rule-pack file:
//   {"version": "...",
//    "semantic":   [{"name", "keywords": [...], "synonyms": [...]}, ...],
//    "structural": [{"name", "kind": "qa_pairs"|"consecutive_repeat", "threshold"}]}
// Keywords and synonyms are normalized to lemma form on load; every entry that
// changes under normalization is reported through `notes`.
RulePack parse_rule_pack(std::string_view json_text,
                         std::vector<std::string>* notes = nullptr);
RulePack load_rule_pack(const std::filesystem::path& path,
                        std::vector<std::string>* notes = nullptr);
std::string serialize_rule_pack(const RulePack& pack);
void save_rule_pack(const RulePack& pack, const std::filesystem::path& path);

// The bundled eight keyword rules and two structure rules.
const RulePack& default_rule_pack();

// Frozen offline word -> synonyms mapping.
// Format: `word<TAB>syn,syn,...` per line; `#` comments.
class Thesaurus {
 public:
  Thesaurus() = default;
  static Thesaurus parse(std::string_view tsv);
  static Thesaurus load(const std::filesystem::path& path);
  static const Thesaurus& builtin();

  // nullptr when the word has no entry.
  const std::vector<std::string>* synonyms(std::string_view word) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

// Union of the seeds and their thesaurus synonyms, all normalized to lemma
// form. Synonyms that do not normalize to exactly one token are dropped.
std::set<std::string> expand_synonyms(std::span<const std::string> seeds,
                                      const Thesaurus& thesaurus,
                                      const text::Normalizer& normalizer);

struct HeuristicFeatureVector {
  std::vector<std::uint8_t> bits;
  std::vector<std::string> names;

  std::size_t size() const noexcept { return bits.size(); }
  bool any() const noexcept;
  std::vector<std::string> triggered() const;
  bool operator==(const HeuristicFeatureVector&) const = default;
};

std::vector<std::uint8_t> extract_semantic(const text::NormalizedText& norm,
                                           std::span<const SemanticRule> rules);

// max(p1, p2): p1 pairs `q :` markers with a later `a :` marker in order;
// p2 counts `?` tokens that have further text after them.
std::size_t count_qa_pairs(const text::NormalizedText& norm);

// Longest run of identical lemmas over the non-punctuation tokens.
std::size_t max_consecutive_repeat(const text::NormalizedText& norm);

std::vector<std::uint8_t> extract_structural(const text::NormalizedText& norm,
                                             std::span<const StructuralRule> rules);

HeuristicFeatureVector extract_features(const text::NormalizedText& norm,
                                        const RulePack& pack);
HeuristicFeatureVector extract_features(std::string_view text, const RulePack& pack);

}  // namespace sentinel::rules

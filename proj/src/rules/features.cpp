#include <algorithm>
#include <fstream>
#include <sstream>

#include "resources.h"
#include "sentinel/errors.h"
#include "sentinel/rules.h"

namespace sentinel::rules {

// ---------------------------------------------------------------------------
// Thesaurus

Thesaurus Thesaurus::parse(std::string_view tsv) {
  Thesaurus out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < tsv.size()) {
    std::size_t end = tsv.find('\n', pos);
    if (end == std::string_view::npos) end = tsv.size();
    std::string_view line = tsv.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw ParseError("thesaurus line " + std::to_string(line_no) +
                       ": expected `word<TAB>synonyms`");
    }
    auto& synonyms = out.entries_[text::to_lower(line.substr(0, tab))];
    std::string_view rest = line.substr(tab + 1);
    while (!rest.empty()) {
      const std::size_t comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      if (!item.empty()) synonyms.push_back(text::to_lower(item));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  return out;
}

Thesaurus Thesaurus::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read thesaurus: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const Thesaurus& Thesaurus::builtin() {
  static const Thesaurus instance = parse(resources::kThesaurusTsv);
  return instance;
}

const std::vector<std::string>* Thesaurus::synonyms(std::string_view word) const {
  const auto it = entries_.find(std::string(word));
  return it == entries_.end() ? nullptr : &it->second;
}

std::set<std::string> expand_synonyms(std::span<const std::string> seeds,
                                      const Thesaurus& thesaurus,
                                      const text::Normalizer& normalizer) {
  std::set<std::string> out;
  auto add_single_token = [&](const std::string& word) -> const std::string* {
    const text::NormalizedText norm = normalizer.normalize(word);
    if (norm.tokens.size() != 1) return nullptr;
    return &*out.insert(norm.tokens.front().lemma).first;
  };
  for (const auto& seed : seeds) {
    const std::string* lemma = add_single_token(seed);
    // A seed may be listed in surface form ("hitting") or lemma form ("hit").
    std::vector<std::string> keys{text::to_lower(seed)};
    if (lemma && *lemma != keys.front()) keys.push_back(*lemma);
    for (const auto& key : keys) {
      if (const auto* synonyms = thesaurus.synonyms(key)) {
        for (const auto& synonym : *synonyms) add_single_token(synonym);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature extraction

bool HeuristicFeatureVector::any() const noexcept {
  return std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
}

std::vector<std::string> HeuristicFeatureVector::triggered() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < bits.size() && i < names.size(); ++i) {
    if (bits[i]) out.push_back(names[i]);
  }
  return out;
}

std::vector<std::uint8_t> extract_semantic(const text::NormalizedText& norm,
                                           std::span<const SemanticRule> rules) {
  std::vector<std::uint8_t> bits(rules.size(), 0);
  for (const auto& token : norm.tokens) {
    if (token.is_punct) continue;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (!bits[i] && rules[i].synonym_set.contains(token.lemma)) bits[i] = 1;
    }
  }
  return bits;
}

std::size_t count_qa_pairs(const text::NormalizedText& norm) {
  const auto& tokens = norm.tokens;
  auto is_marker = [&](std::size_t i, std::string_view letter) {
    return i + 1 < tokens.size() && !tokens[i].is_punct && tokens[i].lemma == letter &&
           tokens[i + 1].is_punct && tokens[i + 1].surface == ":";
  };

  // Each q: pairs with the earliest unused a: after it.
  std::size_t marker_pairs = 0;
  std::size_t open_questions = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_marker(i, "q")) {
      ++open_questions;
      ++i;
    } else if (open_questions > 0 && is_marker(i, "a")) {
      --open_questions;
      ++marker_pairs;
      ++i;
    }
  }

  // Tokens never include whitespace, so any later token is further text.
  std::size_t answered_questions = 0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i].is_punct && tokens[i].surface == "?") ++answered_questions;
  }
  return std::max(marker_pairs, answered_questions);
}

std::size_t max_consecutive_repeat(const text::NormalizedText& norm) {
  std::size_t best = 0;
  std::size_t run = 0;
  const std::string* previous = nullptr;
  for (const auto& token : norm.tokens) {
    if (token.is_punct) continue;
    run = (previous && *previous == token.lemma) ? run + 1 : 1;
    previous = &token.lemma;
    best = std::max(best, run);
  }
  return best;
}

std::vector<std::uint8_t> extract_structural(const text::NormalizedText& norm,
                                             std::span<const StructuralRule> rules) {
  std::vector<std::uint8_t> bits(rules.size(), 0);
  for (std::size_t i = 0; i < rules.size(); ++i) {
    std::size_t count = 0;
    switch (rules[i].kind) {
      case StructuralKind::kQaPairs: count = count_qa_pairs(norm); break;
      case StructuralKind::kConsecutiveRepeat: count = max_consecutive_repeat(norm); break;
    }
    bits[i] = count >= static_cast<std::size_t>(rules[i].threshold) ? 1 : 0;
  }
  return bits;
}

HeuristicFeatureVector extract_features(const text::NormalizedText& norm,
                                        const RulePack& pack) {
  HeuristicFeatureVector out;
  out.bits = extract_semantic(norm, pack.semantic());
  const auto structural = extract_structural(norm, pack.structural());
  out.bits.insert(out.bits.end(), structural.begin(), structural.end());
  out.names = pack.names();
  return out;
}

HeuristicFeatureVector extract_features(std::string_view text, const RulePack& pack) {
  return extract_features(text::normalize(text), pack);
}

}  // namespace sentinel::rules

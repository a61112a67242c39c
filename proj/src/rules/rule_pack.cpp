#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "resources.h"
#include "sentinel/errors.h"
#include "sentinel/rules.h"

namespace sentinel::rules {
namespace {

using nlohmann::json;

bool has_whitespace(std::string_view s) {
  return s.find_first_of(" \t\r\n") != std::string_view::npos;
}

// Normalizes a rule-pack entry to its single lemma. Entries spanning several
// tokens cannot match a single token and are rejected.
std::string normalize_entry(const std::string& raw, const std::string& where,
                            std::vector<std::string>* notes) {
  static const text::Normalizer normalizer;
  const text::NormalizedText norm = normalizer.normalize(raw);
  if (norm.tokens.size() != 1) {
    throw ConfigError(where + ": entry '" + raw +
                      "' must be a single token (matching is per token)");
  }
  std::string lemma = norm.tokens.front().lemma;
  if (notes && lemma != raw) {
    notes->push_back(where + ": '" + raw + "' normalized to '" + lemma + "'");
  }
  return lemma;
}

std::vector<std::string> string_array(const json& node, const std::string& where) {
  if (!node.is_array()) throw ConfigError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : node) {
    if (!item.is_string()) throw ConfigError(where + " must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

std::string_view to_string(StructuralKind kind) {
  switch (kind) {
    case StructuralKind::kQaPairs: return "qa_pairs";
    case StructuralKind::kConsecutiveRepeat: return "consecutive_repeat";
  }
  return "unknown";
}

StructuralKind parse_structural_kind(std::string_view name) {
  if (name == "qa_pairs") return StructuralKind::kQaPairs;
  if (name == "consecutive_repeat") return StructuralKind::kConsecutiveRepeat;
  throw ConfigError("unknown structural rule kind '" + std::string(name) +
                    "' (expected qa_pairs or consecutive_repeat)");
}

std::vector<std::string> check_invariants(const std::string& version,
                                          const std::vector<SemanticRule>& semantic,
                                          const std::vector<StructuralRule>& structural) {
  std::vector<std::string> issues;
  const auto& lemmatizer = *text::Lemmatizer::builtin();
  if (version.empty()) issues.push_back("version must be non-empty");
  if (semantic.empty() && structural.empty()) {
    issues.push_back("rule pack must define at least one rule");
  }

  std::unordered_set<std::string> names;
  auto check_name = [&](const std::string& name) {
    if (name.empty() || has_whitespace(name)) {
      issues.push_back("invalid rule name '" + name + "'");
    } else if (!names.insert(name).second) {
      issues.push_back("duplicate rule name '" + name + "'");
    }
  };

  for (const auto& rule : semantic) {
    check_name(rule.name);
    if (rule.seed_keywords.empty()) {
      issues.push_back(rule.name + ": at least one keyword required");
    }
    auto check_entry = [&](const std::string& entry, const char* field) {
      if (entry.empty() || has_whitespace(entry)) {
        issues.push_back(rule.name + ": " + field + " entry '" + entry +
                         "' is not a single token");
      } else if (text::to_lower(entry) != entry) {
        issues.push_back(rule.name + ": " + field + " entry '" + entry +
                         "' is not lowercase");
      } else if (lemmatizer.lemmatize(entry) != entry) {
        issues.push_back(rule.name + ": " + field + " entry '" + entry +
                         "' is not in lemma form");
      }
    };
    for (const auto& k : rule.seed_keywords) {
      check_entry(k, "keyword");
      if (!rule.synonym_set.contains(k)) {
        issues.push_back(rule.name + ": synonym set is missing keyword '" + k + "'");
      }
    }
    for (const auto& s : rule.synonym_set) check_entry(s, "synonym");
  }

  for (const auto& rule : structural) {
    check_name(rule.name);
    if (rule.threshold < 1) {
      issues.push_back(rule.name + ": threshold must be >= 1");
    }
  }
  return issues;
}

RulePack::RulePack(std::string version, std::vector<SemanticRule> semantic,
                   std::vector<StructuralRule> structural)
    : version_(std::move(version)),
      semantic_(std::move(semantic)),
      structural_(std::move(structural)) {
  const auto issues = check_invariants(version_, semantic_, structural_);
  if (!issues.empty()) {
    std::string message = "invalid rule pack:";
    for (const auto& issue : issues) message += "\n  - " + issue;
    throw ConfigError(message);
  }
}

std::vector<std::string> RulePack::names() const {
  std::vector<std::string> out;
  out.reserve(size());
  for (const auto& r : semantic_) out.push_back(r.name);
  for (const auto& r : structural_) out.push_back(r.name);
  return out;
}

RulePack parse_rule_pack(std::string_view json_text, std::vector<std::string>* notes) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("rule pack is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("rule pack must be a JSON object");
  if (!doc.contains("version") || !doc["version"].is_string()) {
    throw ConfigError("rule pack: `version` string is required");
  }

  std::vector<SemanticRule> semantic;
  if (doc.contains("semantic")) {
    if (!doc["semantic"].is_array()) throw ConfigError("`semantic` must be an array");
    for (const auto& node : doc["semantic"]) {
      if (!node.is_object() || !node.contains("name") || !node["name"].is_string()) {
        throw ConfigError("semantic rule entries need a `name` string");
      }
      SemanticRule rule;
      rule.name = node["name"].get<std::string>();
      if (!node.contains("keywords")) {
        throw ConfigError(rule.name + ": `keywords` is required");
      }
      for (const auto& raw : string_array(node["keywords"], rule.name + ".keywords")) {
        std::string lemma = normalize_entry(raw, rule.name + ".keywords", notes);
        if (std::find(rule.seed_keywords.begin(), rule.seed_keywords.end(), lemma) ==
            rule.seed_keywords.end()) {
          rule.seed_keywords.push_back(std::move(lemma));
        }
      }
      if (node.contains("synonyms")) {
        for (const auto& raw : string_array(node["synonyms"], rule.name + ".synonyms")) {
          rule.synonym_set.insert(normalize_entry(raw, rule.name + ".synonyms", notes));
        }
      } else {
        rule.synonym_set.insert(rule.seed_keywords.begin(), rule.seed_keywords.end());
      }
      semantic.push_back(std::move(rule));
    }
  }

  std::vector<StructuralRule> structural;
  if (doc.contains("structural")) {
    if (!doc["structural"].is_array()) throw ConfigError("`structural` must be an array");
    for (const auto& node : doc["structural"]) {
      if (!node.is_object() || !node.contains("name") || !node["name"].is_string() ||
          !node.contains("kind") || !node["kind"].is_string() ||
          !node.contains("threshold") || !node["threshold"].is_number_integer()) {
        throw ConfigError(
            "structural rule entries need `name`, `kind` strings and an integer "
            "`threshold`");
      }
      StructuralRule rule;
      rule.name = node["name"].get<std::string>();
      rule.kind = parse_structural_kind(node["kind"].get<std::string>());
      rule.threshold = node["threshold"].get<int>();
      structural.push_back(std::move(rule));
    }
  }
  return RulePack(doc["version"].get<std::string>(), std::move(semantic),
                  std::move(structural));
}

RulePack load_rule_pack(const std::filesystem::path& path, std::vector<std::string>* notes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read rule pack: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_rule_pack(buffer.str(), notes);
}

std::string serialize_rule_pack(const RulePack& pack) {
  json doc;
  doc["version"] = pack.version();
  doc["semantic"] = json::array();
  for (const auto& rule : pack.semantic()) {
    doc["semantic"].push_back({{"name", rule.name},
                               {"keywords", rule.seed_keywords},
                               {"synonyms", rule.synonym_set}});
  }
  doc["structural"] = json::array();
  for (const auto& rule : pack.structural()) {
    doc["structural"].push_back({{"name", rule.name},
                                 {"kind", std::string(to_string(rule.kind))},
                                 {"threshold", rule.threshold}});
  }
  return doc.dump(2) + "\n";
}

void save_rule_pack(const RulePack& pack, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write rule pack: " + path.string());
  out << serialize_rule_pack(pack);
  if (!out) throw DataError("failed writing rule pack: " + path.string());
}

const RulePack& default_rule_pack() {
  static const RulePack pack = parse_rule_pack(resources::kDefaultRulePackJson);
  return pack;
}

}  // namespace sentinel::rules

#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "sentinel/embed.h"
#include "sentinel/errors.h"
#include "sentinel/normalizer.h"

namespace sentinel::embed {
namespace {

using nlohmann::json;

constexpr std::string_view kMetaspace = "\xE2\x96\x81";  // U+2581

std::int64_t special_id(const json& doc, const std::vector<std::string>& names,
                        const std::unordered_map<std::string, std::int64_t>& index) {
  if (doc.contains("post_processor") && doc["post_processor"].is_object()) {
    const auto& pp = doc["post_processor"];
    if (pp.contains("special_tokens") && pp["special_tokens"].is_object()) {
      for (const auto& name : names) {
        const auto it = pp["special_tokens"].find(name);
        if (it != pp["special_tokens"].end() && it->contains("ids") &&
            !(*it)["ids"].empty()) {
          return (*it)["ids"][0].get<std::int64_t>();
        }
      }
    }
  }
  for (const auto& name : names) {
    if (const auto it = index.find(name); it != index.end()) return it->second;
  }
  return -1;
}

bool find_add_prefix_space(const json& node) {
  if (!node.is_object()) return true;
  if (node.value("type", "") == "Metaspace") {
    if (node.contains("add_prefix_space")) return node["add_prefix_space"].get<bool>();
    return node.value("prepend_scheme", "always") != "never";
  }
  if (node.contains("pretokenizers") && node["pretokenizers"].is_array()) {
    for (const auto& child : node["pretokenizers"]) {
      if (child.value("type", "") == "Metaspace") return find_add_prefix_space(child);
    }
  }
  return true;
}

}  // namespace

UnigramTokenizer UnigramTokenizer::from_json(std::string_view tokenizer_json) {
  json doc;
  try {
    doc = json::parse(tokenizer_json);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("tokenizer.json is not valid JSON: ") + e.what());
  }
  if (!doc.contains("model") || doc["model"].value("type", "") != "Unigram") {
    throw ConfigError("tokenizer.json: only Unigram models are supported");
  }
  const auto& model = doc["model"];
  if (!model.contains("vocab") || !model["vocab"].is_array() || model["vocab"].empty()) {
    throw ConfigError("tokenizer.json: model.vocab must be a non-empty array");
  }

  UnigramTokenizer tok;
  for (const auto& entry : model["vocab"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() ||
        !entry[1].is_number()) {
      throw ConfigError("tokenizer.json: vocab entries must be [piece, score]");
    }
    const auto id = static_cast<std::int64_t>(tok.pieces_.size());
    tok.pieces_.push_back(entry[0].get<std::string>());
    tok.scores_.push_back(entry[1].get<double>());
    tok.index_.emplace(tok.pieces_.back(), id);
  }

  std::unordered_set<std::int64_t> specials;
  if (doc.contains("added_tokens") && doc["added_tokens"].is_array()) {
    for (const auto& added : doc["added_tokens"]) {
      if (added.value("special", false)) specials.insert(added.value("id", -1));
    }
  }
  // Special pieces never participate in segmentation.
  for (const auto id : specials) {
    if (id >= 0 && id < static_cast<std::int64_t>(tok.pieces_.size())) {
      tok.index_.erase(tok.pieces_[static_cast<std::size_t>(id)]);
    }
  }
  for (const auto& [piece, id] : tok.index_) {
    tok.max_piece_bytes_ = std::max(tok.max_piece_bytes_, piece.size());
  }

  tok.unk_id_ = model.value("unk_id", 0);
  if (tok.unk_id_ < 0 || tok.unk_id_ >= static_cast<std::int64_t>(tok.pieces_.size())) {
    throw ConfigError("tokenizer.json: unk_id out of range");
  }
  std::unordered_map<std::string, std::int64_t> all;
  for (std::size_t i = 0; i < tok.pieces_.size(); ++i) {
    all.emplace(tok.pieces_[i], static_cast<std::int64_t>(i));
  }
  tok.cls_id_ = special_id(doc, {"[CLS]", "<s>"}, all);
  tok.sep_id_ = special_id(doc, {"[SEP]", "</s>"}, all);
  if (doc.contains("pre_tokenizer")) {
    tok.add_prefix_space_ = find_add_prefix_space(doc["pre_tokenizer"]);
  }
  return tok;
}

UnigramTokenizer UnigramTokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read tokenizer: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::int64_t UnigramTokenizer::id_of(std::string_view piece) const {
  const auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

std::vector<std::int64_t> UnigramTokenizer::segment(std::string_view piece) const {
  const std::size_t n = piece.size();
  if (n == 0) return {};
  // Character boundaries, so pieces never split a code point.
  std::vector<bool> boundary(n + 1, false);
  {
    const auto* bytes = reinterpret_cast<const uint8_t*>(piece.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(n);
    while (i < len) {
      boundary[static_cast<std::size_t>(i)] = true;
      UChar32 c;
      U8_NEXT(bytes, i, len, c);
      (void)c;
    }
    boundary[n] = true;
  }

  double min_score = 0.0;
  for (double s : scores_) min_score = std::min(min_score, s);
  const double unk_score = min_score - 10.0;

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> best(n + 1, kNegInf);
  std::vector<std::size_t> back(n + 1, 0);
  std::vector<std::int64_t> chosen(n + 1, -1);
  best[0] = 0.0;
  for (std::size_t end = 1; end <= n; ++end) {
    if (!boundary[end]) continue;
    const std::size_t lo = end > max_piece_bytes_ ? end - max_piece_bytes_ : 0;
    for (std::size_t start = lo; start < end; ++start) {
      if (!boundary[start] || best[start] == kNegInf) continue;
      const auto it = index_.find(std::string(piece.substr(start, end - start)));
      if (it == index_.end()) continue;
      const double score = best[start] + scores_[static_cast<std::size_t>(it->second)];
      if (score > best[end]) {
        best[end] = score;
        back[end] = start;
        chosen[end] = it->second;
      }
    }
    if (best[end] == kNegInf) {
      // No piece ends here: cover the last code point with <unk>.
      std::size_t start = end - 1;
      while (start > 0 && !boundary[start]) --start;
      if (best[start] != kNegInf) {
        best[end] = best[start] + unk_score;
        back[end] = start;
        chosen[end] = unk_id_;
      }
    }
  }

  std::vector<std::int64_t> ids;
  for (std::size_t pos = n; pos > 0; pos = back[pos]) ids.push_back(chosen[pos]);
  std::reverse(ids.begin(), ids.end());
  return ids;
}

UnigramTokenizer::Encoding UnigramTokenizer::encode(std::string_view text,
                                                    std::size_t max_length) const {
  Encoding enc;
  auto push = [&](std::int64_t id, bool special) {
    enc.ids.push_back(id);
    enc.attention_mask.push_back(1);
    enc.special_mask.push_back(special ? 1 : 0);
  };
  const bool with_cls = cls_id_ >= 0;
  const bool with_sep = sep_id_ >= 0;
  const std::size_t budget =
      max_length > (with_cls ? 1u : 0u) + (with_sep ? 1u : 0u)
          ? max_length - (with_cls ? 1u : 0u) - (with_sep ? 1u : 0u)
          : 0;
  if (with_cls) push(cls_id_, true);

  // Metaspace pre-tokenization: whitespace-delimited chunks, each prefixed
  // with U+2581. Adjacent tokens (no whitespace between) share a chunk.
  const std::string source = text::to_nfc(text);
  std::vector<std::string> chunks;
  std::size_t previous_end = std::string::npos;
  for (const auto& token : text::tokenize(source)) {
    if (token.byte_offset != previous_end) {
      const bool prefix = add_prefix_space_ || !chunks.empty();
      chunks.push_back(prefix ? std::string(kMetaspace) : std::string());
    }
    chunks.back() += token.surface;
    previous_end = token.byte_offset + token.surface.size();
  }

  std::size_t used = 0;
  for (const auto& chunk : chunks) {
    for (const auto id : segment(chunk)) {
      if (used == budget) break;
      push(id, false);
      ++used;
    }
    if (used == budget) break;
  }
  if (with_sep) push(sep_id_, true);
  return enc;
}

}  // namespace sentinel::embed

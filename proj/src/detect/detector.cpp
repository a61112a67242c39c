#include <chrono>
#include <cmath>
#include <sstream>

#include "detect/verdict_json.h"
#include "sentinel/detector.h"
#include "sentinel/errors.h"

namespace sentinel::detect {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::int64_t micros_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
}

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("decision threshold must lie in (0, 1)");
  }
}

}  // namespace

json verdict_json(const DetectionVerdict& v) {
  json out{{"label", to_string(v.label)},
           {"p_injection", v.p_injection},
           {"triggered_rules", v.triggered_rules},
           {"latency_micros", v.latency_micros},
           {"model_version", v.model_version},
           {"rule_pack_version", v.rule_pack_version},
           {"degraded", v.degraded}};
  if (!v.error.empty()) out["error"] = v.error;
  return out;
}

DetectionVerdict verdict_from_json(const json& doc) {
  try {
    DetectionVerdict v;
    v.label = fusion::parse_label(doc.at("label").get<std::string>());
    v.p_injection = doc.at("p_injection").get<double>();
    v.triggered_rules = doc.at("triggered_rules").get<std::vector<std::string>>();
    v.latency_micros = doc.at("latency_micros").get<std::int64_t>();
    v.model_version = doc.at("model_version").get<std::string>();
    v.rule_pack_version = doc.at("rule_pack_version").get<std::string>();
    v.degraded = doc.value("degraded", false);
    v.error = doc.value("error", std::string());
    return v;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed verdict: ") + e.what());
  } catch (const DataError& e) {
    throw ParseError(std::string("malformed verdict: ") + e.what());
  }
}

std::string verdict_to_json(const DetectionVerdict& verdict) {
  return verdict_json(verdict).dump();
}

DetectionVerdict verdict_from_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("verdict is not valid JSON: ") + e.what());
  }
  return verdict_from_json(doc);
}

std::string verdict_to_text(const DetectionVerdict& v) {
  std::ostringstream out;
  out << "label:          " << to_string(v.label) << '\n';
  out << "p_injection:    " << v.p_injection << '\n';
  out << "triggered:      ";
  if (v.triggered_rules.empty()) out << "(none)";
  for (std::size_t i = 0; i < v.triggered_rules.size(); ++i) {
    out << (i ? ", " : "") << v.triggered_rules[i];
  }
  out << '\n';
  out << "model:          " << v.model_version << '\n';
  out << "rule pack:      " << v.rule_pack_version << '\n';
  out << "latency (us):   " << v.latency_micros << '\n';
  if (v.degraded) out << "degraded:       " << v.error << '\n';
  return out.str();
}

PipelineDetector::PipelineDetector(std::shared_ptr<const rules::RulePack> pack, double threshold)
    : pack_(std::move(pack)), model_version_(kHeuristicsOnlyVersion), threshold_(threshold) {
  if (!pack_) throw ConfigError("detector needs a rule pack");
  check_threshold(threshold_);
}

PipelineDetector::PipelineDetector(std::shared_ptr<const rules::RulePack> pack,
                                   std::shared_ptr<const embed::EmbeddingProvider> provider,
                                   fusion::FusionHeadParams model, double threshold)
    : pack_(std::move(pack)), provider_(std::move(provider)), threshold_(threshold) {
  if (!pack_) throw ConfigError("detector needs a rule pack");
  if (!provider_) throw ConfigError("model detector needs an embedding provider");
  check_threshold(threshold_);
  model.head.check();
  if (model.heuristic_dim != pack_->size()) {
    throw DimensionError("model expects " + std::to_string(model.heuristic_dim) +
                         " heuristic features, rule pack defines " +
                         std::to_string(pack_->size()));
  }
  if (model.embedding_dim != provider_->dimension()) {
    throw DimensionError("model expects embedding dim " + std::to_string(model.embedding_dim) +
                         ", provider supplies " + std::to_string(provider_->dimension()));
  }
  if (model.head.input_dim() != model.embedding_dim + model.heuristic_dim) {
    throw DimensionError("model head input width disagrees with its recorded dims");
  }
  if (model.rule_pack_version != pack_->version()) {
    throw ConfigError("model was trained with rule pack '" + model.rule_pack_version +
                      "', loaded pack is '" + pack_->version() + "'");
  }
  model_version_ = fusion::model_fingerprint(model);
  model_ = std::move(model);
}

DetectionVerdict PipelineDetector::detect(std::string_view text) const {
  const auto start = Clock::now();
  const auto norm = text::normalize(text);
  const auto bits = rules::extract_features(norm, *pack_);

  DetectionVerdict v;
  v.triggered_rules = bits.triggered();
  v.model_version = model_version_;
  v.rule_pack_version = pack_->version();
  if (!model_) {
    v.p_injection = bits.any() ? 1.0 : 0.0;
    v.label = bits.any() ? Label::kInjection : Label::kBenign;
  } else {
    const auto embedding = provider_->embed(text);
    const auto x = fusion::fuse(embedding, bits, model_->embedding_dim, model_->heuristic_dim);
    const auto pred = fusion::forward(x.values, model_->head, threshold_);
    v.p_injection = pred.p_injection;
    v.label = pred.label;
  }
  v.latency_micros = micros_since(start);
  return v;
}

std::vector<fusion::TrainingSample> featurize(std::span<const data::LabeledExample> examples,
                                              const rules::RulePack& pack,
                                              const embed::EmbeddingProvider& provider,
                                              std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  std::vector<fusion::TrainingSample> out;
  out.reserve(examples.size());
  std::vector<std::string> texts;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, examples.size() - start);
    texts.clear();
    for (std::size_t i = 0; i < len; ++i) texts.push_back(examples[start + i].text);
    std::vector<embed::SemanticEmbedding> embeddings;
    try {
      embeddings = provider.embed_batch(texts);
    } catch (const ProviderError& e) {
      if (!e.has_index()) throw;
      throw ProviderError(e.kind(), e.what(), start + e.index());
    }
    for (std::size_t i = 0; i < len; ++i) {
      const auto bits = rules::extract_features(texts[i], pack);
      auto fused = fusion::fuse(embeddings[i], bits, provider.dimension(), pack.size());
      out.push_back({std::move(fused.values), examples[start + i].label});
    }
  }
  return out;
}

}  // namespace sentinel::detect

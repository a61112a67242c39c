#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/dataio.h"
#include "sentinel/embed.h"
#include "sentinel/fusion.h"
#include "sentinel/rules.h"

namespace sentinel::detect {

using fusion::Label;

inline constexpr std::string_view kHeuristicsOnlyVersion = "heuristics-only";

struct DetectionVerdict {
  Label label = Label::kBenign;
  double p_injection = 0.0;
  std::vector<std::string> triggered_rules;  // pack order
  std::int64_t latency_micros = 0;
  std::string model_version;
  std::string rule_pack_version;
  // Set when a component failed and the verdict was decided fail-closed.
  bool degraded = false;
  std::string error;

  bool operator==(const DetectionVerdict&) const = default;
};

// {"label": "injection", "p_injection": 1.0, "triggered_rules": [...],
//  "latency_micros": 12, "model_version": ..., "rule_pack_version": ...,
//  "degraded": false[, "error": ...]}
std::string verdict_to_json(const DetectionVerdict& verdict);
// Throws ParseError on malformed input.
DetectionVerdict verdict_from_json(std::string_view json_text);
std::string verdict_to_text(const DetectionVerdict& verdict);

class Detector {
 public:
  virtual ~Detector() = default;

  // May throw ProviderError when the embedding backend fails.
  virtual DetectionVerdict detect(std::string_view text) const = 0;

  virtual const rules::RulePack& rule_pack() const noexcept = 0;
  virtual const std::string& model_version() const noexcept = 0;
  virtual double threshold() const noexcept = 0;
};

// Rules channel, optionally followed by embedding + fusion head.
//
// Heuristics-only: p_injection is 1 when any rule fires, else 0.
// With a model: p_injection comes from the head over [embedding | bits] and
// the label is injection iff p_injection >= threshold.
class PipelineDetector final : public Detector {
 public:
  explicit PipelineDetector(std::shared_ptr<const rules::RulePack> pack,
                            double threshold = 0.5);
  // Throws DimensionError/ConfigError when the model does not fit the pack or
  // provider.
  PipelineDetector(std::shared_ptr<const rules::RulePack> pack,
                   std::shared_ptr<const embed::EmbeddingProvider> provider,
                   fusion::FusionHeadParams model, double threshold = 0.5);

  DetectionVerdict detect(std::string_view text) const override;

  const rules::RulePack& rule_pack() const noexcept override { return *pack_; }
  const std::string& model_version() const noexcept override { return model_version_; }
  double threshold() const noexcept override { return threshold_; }
  bool heuristics_only() const noexcept { return !model_.has_value(); }

 private:
  std::shared_ptr<const rules::RulePack> pack_;
  std::shared_ptr<const embed::EmbeddingProvider> provider_;
  std::optional<fusion::FusionHeadParams> model_;
  std::string model_version_;
  double threshold_;
};

// Fused features for training: the rules channel plus embeddings fetched in
// batches of `batch_size`.
std::vector<fusion::TrainingSample> featurize(std::span<const data::LabeledExample> examples,
                                              const rules::RulePack& pack,
                                              const embed::EmbeddingProvider& provider,
                                              std::size_t batch_size = 32);

}  // namespace sentinel::detect

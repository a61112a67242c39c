#include <cmath>

#include "embed_internal.h"
#include "sentinel/embed.h"
#include "sentinel/errors.h"
#include "sentinel/normalizer.h"

namespace sentinel {

const char* to_string(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::kInit: return "init";
    case ProviderErrorKind::kTimeout: return "timeout";
    case ProviderErrorKind::kUnreachable: return "unreachable";
    case ProviderErrorKind::kBadStatus: return "bad_status";
    case ProviderErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ProviderErrorKind::kProtocol: return "protocol";
  }
  return "unknown";
}

}  // namespace sentinel

namespace sentinel::embed {

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::kStub: return "stub";
    case Backend::kOnnxFile: return "onnx_file";
    case Backend::kRemote: return "remote";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "stub") return Backend::kStub;
  if (name == "onnx_file" || name == "onnx") return Backend::kOnnxFile;
  if (name == "remote") return Backend::kRemote;
  throw ConfigError("unknown embedding backend '" + std::string(name) +
                    "' (expected stub, onnx_file or remote)");
}

void validate(const ProviderConfig& config) {
  if (config.dimension == 0) throw ConfigError("provider dimension must be positive");
  switch (config.backend) {
    case Backend::kStub:
      break;
    case Backend::kOnnxFile:
      if (config.model_path.empty()) throw ConfigError("onnx_file backend needs model_path");
      if (config.tokenizer_path.empty()) {
        throw ConfigError("onnx_file backend needs tokenizer_path");
      }
      if (config.max_sequence_length < 2) {
        throw ConfigError("max_sequence_length must be at least 2");
      }
      break;
    case Backend::kRemote:
      if (config.endpoint.empty()) throw ConfigError("remote backend needs an endpoint URL");
      if (config.timeout.count() <= 0) throw ConfigError("remote timeout must be positive");
      if (config.max_in_flight == 0) throw ConfigError("max_in_flight must be >= 1");
      break;
  }
}

std::vector<SemanticEmbedding> EmbeddingProvider::embed_batch(
    std::span<const std::string> texts) const {
  std::vector<SemanticEmbedding> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(embed(texts[i]));
    } catch (const ProviderError& e) {
      throw ProviderError(e.kind(), "batch element " + std::to_string(i) + ": " + e.what(),
                          i);
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

StubProvider::StubProvider(std::size_t dimension)
    : dimension_(dimension), id_("stub-fnv1a64-d" + std::to_string(dimension)) {
  if (dimension_ == 0) throw ConfigError("stub provider dimension must be positive");
}

SemanticEmbedding StubProvider::embed(std::string_view text) const {
  SemanticEmbedding out{std::vector<double>(dimension_, 0.0), id_};
  for (const auto& token : text::normalize(text).tokens) {
    out.values[fnv1a64(token.lemma) % dimension_] += 1.0;
  }
  double norm = 0.0;
  for (double v : out.values) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& v : out.values) v /= norm;
  }
  return out;
}

std::vector<double> masked_mean_pool(std::span<const double> states, std::size_t dim,
                                     std::span<const std::int64_t> mask) {
  if (dim == 0 || states.size() != mask.size() * dim) {
    throw DimensionError("masked_mean_pool: states hold " + std::to_string(states.size()) +
                         " values, expected " + std::to_string(mask.size()) + " x " +
                         std::to_string(dim));
  }
  std::vector<double> pooled(dim, 0.0);
  std::size_t selected = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t] == 0) continue;
    ++selected;
    for (std::size_t j = 0; j < dim; ++j) pooled[j] += states[t * dim + j];
  }
  if (selected > 0) {
    for (double& v : pooled) v /= static_cast<double>(selected);
  }
  return pooled;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config) {
  validate(config);
  switch (config.backend) {
    case Backend::kStub:
      return std::make_unique<StubProvider>(config.dimension);
    case Backend::kRemote:
      return std::make_unique<RemoteProvider>(config);
    case Backend::kOnnxFile:
      return detail::make_onnx_provider(config);
  }
  throw ConfigError("unsupported backend");
}

}  // namespace sentinel::embed

#include <chrono>
#include <cmath>
#include <limits>
#include <semaphore>

#include "httplib.h"
#include "json.hpp"
#include "sentinel/embed.h"
#include "sentinel/errors.h"
#include "util/url.h"

namespace sentinel::embed {

using nlohmann::json;

struct RemoteProvider::Impl {
  explicit Impl(const ProviderConfig& config)
      : target(util::split_url(config.endpoint)),
        timeout(config.timeout),
        slots(static_cast<std::ptrdiff_t>(config.max_in_flight)) {}

  util::UrlTarget target;
  std::chrono::milliseconds timeout;
  mutable std::counting_semaphore<> slots;
};

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s)
      : sem_(s) {
    sem_.acquire();
  }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

}  // namespace

RemoteProvider::RemoteProvider(const ProviderConfig& config)
    : dimension_(config.dimension), id_("remote:" + config.endpoint) {
  validate(config);
  try {
    impl_ = std::make_unique<Impl>(config);
  } catch (const ConfigError& e) {
    throw ProviderError(ProviderErrorKind::kInit, e.what());
  }
}

RemoteProvider::~RemoteProvider() = default;

SemanticEmbedding RemoteProvider::embed(std::string_view text) const {
  const std::string owned(text);
  auto batch = embed_batch(std::span<const std::string>(&owned, 1));
  return std::move(batch.front());
}

std::vector<SemanticEmbedding> RemoteProvider::embed_batch(
    std::span<const std::string> texts) const {
  if (texts.empty()) return {};

  const std::string body = json{{"texts", texts}}.dump();
  httplib::Client client(impl_->target.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(impl_->timeout);
  const auto micros =
      std::chrono::duration_cast<std::chrono::microseconds>(impl_->timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Result result;
  const auto started = std::chrono::steady_clock::now();
  {
    SlotGuard slot(impl_->slots);
    result = client.Post(impl_->target.path_prefix + "/embed", body, "application/json");
  }
  const auto elapsed = std::chrono::steady_clock::now() - started;

  if (!result) {
    const auto err = result.error();
    const std::string detail = httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout ||
        ((err == httplib::Error::Read || err == httplib::Error::Write) &&
         elapsed >= impl_->timeout)) {
      throw ProviderError(ProviderErrorKind::kTimeout,
                          "embedding service timed out after " +
                              std::to_string(impl_->timeout.count()) + " ms (" + detail + ")");
    }
    if (err == httplib::Error::Connection) {
      throw ProviderError(ProviderErrorKind::kUnreachable,
                          "embedding service unreachable at " + impl_->target.origin);
    }
    throw ProviderError(ProviderErrorKind::kUnreachable,
                        "embedding request failed: " + detail);
  }
  if (result->status != 200) {
    throw ProviderError(ProviderErrorKind::kBadStatus,
                        "embedding service returned HTTP " + std::to_string(result->status));
  }

  json doc;
  try {
    doc = json::parse(result->body);
  } catch (const json::parse_error& e) {
    throw ProviderError(ProviderErrorKind::kProtocol,
                        std::string("embedding response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dim") || !doc["dim"].is_number_integer() ||
      !doc.contains("vectors") || !doc["vectors"].is_array()) {
    throw ProviderError(ProviderErrorKind::kProtocol,
                        "embedding response needs integer `dim` and array `vectors`");
  }
  const auto dim = doc["dim"].get<std::int64_t>();
  if (dim != static_cast<std::int64_t>(dimension_)) {
    throw ProviderError(ProviderErrorKind::kDimensionMismatch,
                        "embedding service reports dim " + std::to_string(dim) +
                            ", configured " + std::to_string(dimension_));
  }
  const auto& vectors = doc["vectors"];
  if (vectors.size() != texts.size()) {
    throw ProviderError(ProviderErrorKind::kProtocol,
                        "embedding service returned " + std::to_string(vectors.size()) +
                            " vectors for " + std::to_string(texts.size()) + " texts");
  }

  std::vector<SemanticEmbedding> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (!v.is_array() || v.size() != dimension_) {
      throw ProviderError(ProviderErrorKind::kDimensionMismatch,
                          "vector " + std::to_string(i) + " has " +
                              std::to_string(v.is_array() ? v.size() : 0) +
                              " entries, expected " + std::to_string(dimension_),
                          i);
    }
    SemanticEmbedding e{std::vector<double>(dimension_), id_};
    for (std::size_t j = 0; j < dimension_; ++j) {
      if (!v[j].is_number() || !std::isfinite(v[j].get<double>())) {
        throw ProviderError(ProviderErrorKind::kProtocol,
                            "vector " + std::to_string(i) + " has a non-finite entry", i);
      }
      e.values[j] = v[j].get<double>();
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sentinel::embed

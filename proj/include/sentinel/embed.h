#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sentinel::embed {

struct SemanticEmbedding {
  std::vector<double> values;
  std::string provider_id;

  std::size_t dimension() const noexcept { return values.size(); }
  bool operator==(const SemanticEmbedding&) const = default;
};

enum class Backend { kStub, kOnnxFile, kRemote };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view name);  // throws ConfigError

struct ProviderConfig {
  Backend backend = Backend::kStub;
  std::size_t dimension = 768;

  // onnx_file
  std::filesystem::path model_path;
  std::filesystem::path tokenizer_path;  // HuggingFace tokenizer.json (Unigram)
  std::size_t max_sequence_length = 512;

  // remote
  std::string endpoint;  // base URL, e.g. http://127.0.0.1:9000
  std::chrono::milliseconds timeout{10000};
  std::size_t max_in_flight = 4;
};

// Throws ConfigError describing the first inconsistent field.
void validate(const ProviderConfig& config);

// Pooled sentence embedding source. Implementations are immutable after
// construction and safe to call concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual SemanticEmbedding embed(std::string_view text) const = 0;

  // Element i equals embed(texts[i]). A failing element fails the whole batch
  // with a ProviderError carrying its index.
  virtual std::vector<SemanticEmbedding> embed_batch(
      std::span<const std::string> texts) const;

  virtual std::size_t dimension() const noexcept = 0;
  virtual const std::string& id() const noexcept = 0;
  virtual Backend backend() const noexcept = 0;
};

// Throws ProviderError(kInit) or ConfigError when the backend cannot start.
std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config);

// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// Feature-hashing provider: each lemma of the normalized text increments
// bucket fnv1a64(lemma) % d, and the count vector is L2-normalized. Text with
// no tokens embeds to the zero vector.
class StubProvider final : public EmbeddingProvider {
 public:
  explicit StubProvider(std::size_t dimension = 768);

  SemanticEmbedding embed(std::string_view text) const override;
  std::size_t dimension() const noexcept override { return dimension_; }
  const std::string& id() const noexcept override { return id_; }
  Backend backend() const noexcept override { return Backend::kStub; }

 private:
  std::size_t dimension_;
  std::string id_;
};

// Client of the sidecar protocol:
//   POST {endpoint}/embed  {"texts": [...]}  ->  {"dim": d, "vectors": [[...], ...]}
// Timeouts, connection failures, non-200 statuses and dimension mismatches
// surface as distinct ProviderErrorKinds. At most max_in_flight requests are
// outstanding at once.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(const ProviderConfig& config);
  ~RemoteProvider() override;

  SemanticEmbedding embed(std::string_view text) const override;
  std::vector<SemanticEmbedding> embed_batch(
      std::span<const std::string> texts) const override;
  std::size_t dimension() const noexcept override { return dimension_; }
  const std::string& id() const noexcept override { return id_; }
  Backend backend() const noexcept override { return Backend::kRemote; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t dimension_;
  std::string id_;
};

// Mean of the token states whose mask entry is non-zero. `states` is
// row-major [tokens x dim]. Returns zeros when no token is selected.
std::vector<double> masked_mean_pool(std::span<const double> states, std::size_t dim,
                                     std::span<const std::int64_t> mask);

// SentencePiece-style Unigram tokenizer read from a HuggingFace tokenizer.json
// (model.type == "Unigram", Metaspace pre-tokenization), as shipped with
// DeBERTa-v3 checkpoints.
class UnigramTokenizer {
 public:
  struct Encoding {
    std::vector<std::int64_t> ids;
    std::vector<std::int64_t> attention_mask;
    std::vector<std::int64_t> special_mask;  // 1 for [CLS]/[SEP]
  };

  static UnigramTokenizer from_json(std::string_view tokenizer_json);
  static UnigramTokenizer load(const std::filesystem::path& path);

  // Best-scoring segmentation of one pre-tokenized piece (Viterbi).
  std::vector<std::int64_t> segment(std::string_view piece) const;

  // [CLS] pieces... [SEP], truncated to max_length.
  Encoding encode(std::string_view text, std::size_t max_length) const;

  std::size_t vocab_size() const noexcept { return pieces_.size(); }
  std::int64_t unk_id() const noexcept { return unk_id_; }
  std::int64_t cls_id() const noexcept { return cls_id_; }
  std::int64_t sep_id() const noexcept { return sep_id_; }
  std::int64_t id_of(std::string_view piece) const;  // -1 when absent

 private:
  std::vector<std::string> pieces_;
  std::vector<double> scores_;
  std::unordered_map<std::string, std::int64_t> index_;
  std::size_t max_piece_bytes_ = 0;
  std::int64_t unk_id_ = 0;
  std::int64_t cls_id_ = -1;
  std::int64_t sep_id_ = -1;
  bool add_prefix_space_ = true;
};

// True when the library was built with ONNX Runtime.
bool onnx_backend_available() noexcept;

}  // namespace sentinel::embed

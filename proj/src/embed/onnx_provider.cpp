#include <onnxruntime_cxx_api.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <mutex>

#include "embed_internal.h"
#include "sentinel/errors.h"

namespace sentinel::embed {

bool onnx_backend_available() noexcept { return true; }

namespace detail {
namespace {

// Encoder exported to ONNX with inputs input_ids / attention_mask (and
// optionally token_type_ids) and the token states as first output
// [batch, tokens, hidden].
class OnnxProvider final : public EmbeddingProvider {
 public:
  explicit OnnxProvider(const ProviderConfig& config)
      : dimension_(config.dimension),
        max_length_(config.max_sequence_length),
        id_("onnx:" + config.model_path.filename().string()),
        env_(ORT_LOGGING_LEVEL_WARNING, "sentinel") {
    if (!std::filesystem::is_regular_file(config.model_path)) {
      throw ProviderError(ProviderErrorKind::kInit,
                          "ONNX model not found: " + config.model_path.string());
    }
    try {
      tokenizer_ = UnigramTokenizer::load(config.tokenizer_path);
    } catch (const Error& e) {
      throw ProviderError(ProviderErrorKind::kInit, e.what());
    }
    try {
      Ort::SessionOptions options;
      options.SetIntraOpNumThreads(1);
      session_ = std::make_unique<Ort::Session>(env_, config.model_path.c_str(), options);
      Ort::AllocatorWithDefaultOptions allocator;
      for (std::size_t i = 0; i < session_->GetInputCount(); ++i) {
        input_names_.push_back(session_->GetInputNameAllocated(i, allocator).get());
      }
      output_name_ = session_->GetOutputNameAllocated(0, allocator).get();
    } catch (const Ort::Exception& e) {
      throw ProviderError(ProviderErrorKind::kInit,
                          std::string("cannot load ONNX model: ") + e.what());
    }
    for (const auto& name : input_names_) {
      if (name != "input_ids" && name != "attention_mask" && name != "token_type_ids") {
        throw ProviderError(ProviderErrorKind::kInit, "unsupported model input '" + name + "'");
      }
    }
  }

  SemanticEmbedding embed(std::string_view text) const override {
    const auto enc = tokenizer_.encode(text, max_length_);
    const std::array<std::int64_t, 2> shape{1, static_cast<std::int64_t>(enc.ids.size())};
    std::vector<std::int64_t> token_types(enc.ids.size(), 0);
    auto memory = Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault);

    std::vector<Ort::Value> inputs;
    std::vector<const char*> names;
    for (const auto& name : input_names_) {
      const std::vector<std::int64_t>& data = name == "input_ids"        ? enc.ids
                                              : name == "attention_mask" ? enc.attention_mask
                                                                         : token_types;
      inputs.push_back(Ort::Value::CreateTensor<std::int64_t>(
          memory, const_cast<std::int64_t*>(data.data()), data.size(), shape.data(),
          shape.size()));
      names.push_back(name.c_str());
    }
    const char* output = output_name_.c_str();

    std::vector<Ort::Value> outputs;
    {
      std::lock_guard lock(run_mutex_);
      outputs = session_->Run(Ort::RunOptions{nullptr}, names.data(), inputs.data(),
                              inputs.size(), &output, 1);
    }
    const auto info = outputs.front().GetTensorTypeAndShapeInfo();
    const auto out_shape = info.GetShape();
    if (out_shape.size() != 3 || out_shape[1] != shape[1] ||
        out_shape[2] != static_cast<std::int64_t>(dimension_)) {
      throw ProviderError(ProviderErrorKind::kDimensionMismatch,
                          "ONNX output shape does not match [1, tokens, " +
                              std::to_string(dimension_) + "]");
    }
    const float* raw = outputs.front().GetTensorData<float>();
    std::vector<double> states(raw, raw + info.GetElementCount());
    std::vector<std::int64_t> pool_mask(enc.ids.size());
    for (std::size_t i = 0; i < pool_mask.size(); ++i) {
      pool_mask[i] = enc.attention_mask[i] != 0 && enc.special_mask[i] == 0 ? 1 : 0;
    }
    SemanticEmbedding out{masked_mean_pool(states, dimension_, pool_mask), id_};
    for (double v : out.values) {
      if (!std::isfinite(v)) {
        throw ProviderError(ProviderErrorKind::kProtocol, "ONNX model produced non-finite output");
      }
    }
    return out;
  }

  std::size_t dimension() const noexcept override { return dimension_; }
  const std::string& id() const noexcept override { return id_; }
  Backend backend() const noexcept override { return Backend::kOnnxFile; }

 private:
  std::size_t dimension_;
  std::size_t max_length_;
  std::string id_;
  Ort::Env env_;
  std::unique_ptr<Ort::Session> session_;
  UnigramTokenizer tokenizer_;
  std::vector<std::string> input_names_;
  std::string output_name_;
  mutable std::mutex run_mutex_;
};

}  // namespace

std::unique_ptr<EmbeddingProvider> make_onnx_provider(const ProviderConfig& config) {
  return std::make_unique<OnnxProvider>(config);
}

}  // namespace detail
}  // namespace sentinel::embed

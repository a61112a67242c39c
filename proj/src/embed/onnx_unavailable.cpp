#include "embed_internal.h"
#include "sentinel/errors.h"

namespace sentinel::embed {

bool onnx_backend_available() noexcept { return false; }

namespace detail {

std::unique_ptr<EmbeddingProvider> make_onnx_provider(const ProviderConfig&) {
  throw ProviderError(ProviderErrorKind::kInit,
                      "onnx_file backend unavailable: library built without ONNX Runtime "
                      "(configure with -DSENTINEL_WITH_ONNXRUNTIME=ON)");
}

}  // namespace detail
}  // namespace sentinel::embed

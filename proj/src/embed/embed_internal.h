#pragma once

#include <memory>

#include "sentinel/embed.h"

namespace sentinel::embed::detail {

// Defined in onnx_provider.cpp, or in onnx_unavailable.cpp when the library is
// built without ONNX Runtime.
std::unique_ptr<EmbeddingProvider> make_onnx_provider(const ProviderConfig& config);

}  // namespace sentinel::embed::detail

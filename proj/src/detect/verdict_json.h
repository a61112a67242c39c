#pragma once

#include "json.hpp"
#include "sentinel/detector.h"

namespace sentinel::detect {

nlohmann::json verdict_json(const DetectionVerdict& verdict);
DetectionVerdict verdict_from_json(const nlohmann::json& doc);

}  // namespace sentinel::detect

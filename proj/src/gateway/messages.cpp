#include <chrono>
#include <set>

#include "json.hpp"
#include "sentinel/errors.h"
#include "sentinel/gateway.h"

namespace sentinel::gateway {

using nlohmann::json;

std::vector<std::string> user_messages(std::string_view request_body) {
  json doc;
  try {
    doc = json::parse(request_body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("messages") || !doc["messages"].is_array()) {
    throw ParseError("chat request needs a `messages` array");
  }
  std::vector<std::string> out;
  for (const auto& msg : doc["messages"]) {
    if (!msg.is_object()) throw ParseError("each message must be an object");
    const auto role = msg.find("role");
    if (role == msg.end() || !role->is_string()) throw ParseError("message without a `role`");
    if (*role != "user") continue;
    const auto content = msg.find("content");
    if (content == msg.end() || content->is_null()) continue;
    if (content->is_string()) {
      out.push_back(content->get<std::string>());
    } else if (content->is_array()) {
      std::string joined;
      bool first = true;
      for (const auto& part : *content) {
        if (!part.is_object()) continue;
        const auto text = part.find("text");
        if (part.value("type", std::string()) != "text" || text == part.end() ||
            !text->is_string()) {
          continue;
        }
        if (!first) joined += '\n';
        joined += text->get<std::string>();
        first = false;
      }
      if (!first) out.push_back(std::move(joined));
    } else {
      throw ParseError("message `content` must be a string or an array of parts");
    }
  }
  return out;
}

detect::DetectionVerdict score_messages(const detect::Detector& detector,
                                        const std::vector<std::string>& messages) {
  const auto start = std::chrono::steady_clock::now();
  detect::DetectionVerdict best;
  best.model_version = detector.model_version();
  best.rule_pack_version = detector.rule_pack().version();

  std::vector<std::string> inputs = messages;
  if (messages.size() > 1) {
    std::string joined;
    for (std::size_t i = 0; i < messages.size(); ++i) {
      if (i) joined += '\n';
      joined += messages[i];
    }
    inputs.push_back(std::move(joined));
  }

  std::set<std::string> fired;
  bool have = false;
  for (const auto& text : inputs) {
    auto v = detector.detect(text);
    fired.insert(v.triggered_rules.begin(), v.triggered_rules.end());
    if (!have || v.p_injection > best.p_injection) {
      best = std::move(v);
      have = true;
    }
  }
  best.triggered_rules.clear();
  for (const auto& name : detector.rule_pack().names()) {
    if (fired.count(name)) best.triggered_rules.push_back(name);
  }
  best.latency_micros = std::chrono::duration_cast<std::chrono::microseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return best;
}

}  // namespace sentinel::gateway

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/detector.h"
#include "sentinel/embed.h"

namespace sentinel::gateway {

enum class Mode { kBlock, kFlag };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);  // throws ConfigError

struct GatewayConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;  // 0 picks a free port

  // OpenAI-style base URL; /v1/chat/completions is forwarded to
  // {upstream}/chat/completions.
  std::string upstream;
  // Name of the environment variable holding the upstream bearer token.
  std::string auth_token_env = "OPENAI_API_KEY";

  Mode mode = Mode::kBlock;
  double threshold = 0.5;

  std::chrono::milliseconds upstream_timeout{60000};
  std::chrono::milliseconds connect_timeout{5000};

  bool heuristics_only = false;
  std::filesystem::path model_path;
  std::filesystem::path rules_path;  // empty: bundled default pack
  embed::ProviderConfig provider;

  std::filesystem::path request_log;  // empty: no request log
  bool log_prompts = false;

  std::size_t max_body_bytes = 4u << 20;
  std::size_t worker_threads = 8;

  // Throws ConfigError naming every problem found.
  void validate() const;
};

// TOML layout:
//   listen = "127.0.0.1:8080"
//   upstream = "https://api.example.com/v1"
//   auth_token_env = "OPENAI_API_KEY"
//   mode = "block" | "flag"
//   threshold = 0.5
//   heuristics_only = false
//   model = "model.json"            # relative paths resolve against the file
//   rules = "pack.json"
//   request_log = "requests.jsonl"
//   log_prompts = false
//   [timeouts]  upstream_ms, connect_ms
//   [provider]  backend, dim, model_path, tokenizer_path, max_sequence_length,
//               endpoint, timeout_ms, max_in_flight
// Throws ConfigError (including TOML syntax errors).
GatewayConfig parse_config(std::string_view toml_text,
                           const std::filesystem::path& base_dir = {});
GatewayConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

// SENTINEL_LISTEN, SENTINEL_UPSTREAM, SENTINEL_MODE, SENTINEL_THRESHOLD.
void apply_env_overrides(GatewayConfig& config, const EnvLookup& env = process_env);

// "host:port", ":port" or "port".
void parse_listen(std::string_view text, std::string& host, int& port);

// Everything a request needs, swapped as one unit on reload.
struct DetectionState {
  std::shared_ptr<const detect::Detector> detector;  // null when unavailable
  std::string rule_pack_version;
  std::string model_version;
  bool degraded = false;
  std::string degraded_reason;
};

// Loads the rule pack, provider and model named in `config`. A model or
// provider that fails to load yields a degraded state instead of throwing;
// an invalid rule pack throws ConfigError.
std::shared_ptr<const DetectionState> build_state(const GatewayConfig& config);

// User-role message contents of an OpenAI-style chat request. `content` may
// be a string or an array of parts; text parts are joined with newlines.
// Throws ParseError when the body is not a chat request.
std::vector<std::string> user_messages(std::string_view request_body);

// Scores every user message and, when there are several, their
// concatenation; returns the verdict with the highest p_injection (triggered
// rules are unioned). No messages yields a benign verdict.
detect::DetectionVerdict score_messages(const detect::Detector& detector,
                                        const std::vector<std::string>& messages);

// HTTP service:
//   POST /v1/detect            {"text": ...} -> DetectionVerdict
//   POST /v1/chat/completions  scored, then blocked (403) or forwarded
//   GET  /healthz              {"status", "model_version", "rule_pack_version", ...}
//   POST /admin/reload         rebuilds the detection state from config
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const noexcept;

  // Rebuilds state from the config's paths. On failure the old state stays
  // and the error is rethrown.
  void reload();
  std::shared_ptr<const DetectionState> state() const;
  const GatewayConfig& config() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sentinel::gateway

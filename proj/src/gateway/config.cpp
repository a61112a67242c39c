#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "sentinel/errors.h"
#include "sentinel/gateway.h"
#include "toml.hpp"
#include "util/url.h"

namespace sentinel::gateway {
namespace {

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view value) {
  std::filesystem::path p{std::string(value)};
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

double parse_double(std::string_view text, const char* what) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string(what) + ": not a number: '" + std::string(text) + "'");
  }
  return value;
}

void check_keys(const toml::table& table, const std::set<std::string_view>& allowed,
                const std::string& where, std::vector<std::string>& problems) {
  for (const auto& [key, node] : table) {
    if (!allowed.count(key.str())) {
      problems.push_back("unknown key '" + where + std::string(key.str()) + "'");
    }
  }
}

template <typename T>
std::optional<T> get(const toml::table& table, std::string_view key, const std::string& where,
                     std::vector<std::string>& problems) {
  const toml::node* node = table.get(key);
  if (!node) return std::nullopt;
  if (auto v = node->value<T>()) return v;
  problems.push_back("'" + where + std::string(key) + "' has the wrong type");
  return std::nullopt;
}

std::chrono::milliseconds positive_ms(std::int64_t v, const std::string& key,
                                      std::vector<std::string>& problems) {
  if (v <= 0) problems.push_back("'" + key + "' must be positive");
  return std::chrono::milliseconds(v);
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::kBlock ? "block" : "flag"; }

Mode parse_mode(std::string_view name) {
  if (name == "block") return Mode::kBlock;
  if (name == "flag") return Mode::kFlag;
  throw ConfigError("mode must be 'block' or 'flag', got '" + std::string(name) + "'");
}

void parse_listen(std::string_view text, std::string& host, int& port) {
  std::string_view port_text = text;
  const auto colon = text.rfind(':');
  if (colon != std::string_view::npos) {
    const std::string_view h = text.substr(0, colon);
    if (!h.empty()) host = std::string(h);
    port_text = text.substr(colon + 1);
  }
  int value = -1;
  const auto* end = port_text.data() + port_text.size();
  const auto [ptr, ec] = std::from_chars(port_text.data(), end, value);
  if (port_text.empty() || ec != std::errc() || ptr != end || value < 0 || value > 65535) {
    throw ConfigError("listen address must be host:port with port 0-65535, got '" +
                      std::string(text) + "'");
  }
  port = value;
}

void GatewayConfig::validate() const {
  std::vector<std::string> problems;
  if (listen_host.empty()) problems.push_back("listen host is empty");
  if (listen_port < 0 || listen_port > 65535) problems.push_back("listen port out of range");
  if (!(threshold > 0.0 && threshold < 1.0)) problems.push_back("threshold must lie in (0, 1)");
  if (!upstream.empty()) {
    try {
      util::split_url(upstream);
    } catch (const ConfigError& e) {
      problems.push_back(std::string("upstream: ") + e.what());
    }
  }
  if (upstream_timeout.count() <= 0) problems.push_back("upstream timeout must be positive");
  if (connect_timeout.count() <= 0) problems.push_back("connect timeout must be positive");
  if (!heuristics_only) {
    if (model_path.empty()) {
      problems.push_back("a model path is required unless heuristics_only is set");
    }
    try {
      embed::validate(provider);
    } catch (const ConfigError& e) {
      problems.push_back(std::string("provider: ") + e.what());
    }
  }
  if (max_body_bytes == 0) problems.push_back("max_body_bytes must be positive");
  if (worker_threads == 0) problems.push_back("worker_threads must be positive");
  if (problems.empty()) return;
  std::string message = "invalid gateway config:";
  for (const auto& p : problems) message += "\n  " + p;
  throw ConfigError(message);
}

GatewayConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::string message = "config is not valid TOML: ";
    message += e.description();
    message += " (line " + std::to_string(e.source().begin.line) + ")";
    throw ConfigError(message);
  }

  GatewayConfig c;
  std::vector<std::string> problems;
  check_keys(root,
             {"listen", "upstream", "auth_token_env", "mode", "threshold", "heuristics_only",
              "model", "rules", "request_log", "log_prompts", "max_body_bytes",
              "worker_threads", "timeouts", "provider"},
             "", problems);

  if (auto v = get<std::string>(root, "listen", "", problems)) {
    try {
      parse_listen(*v, c.listen_host, c.listen_port);
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
  if (auto v = get<std::string>(root, "upstream", "", problems)) c.upstream = *v;
  if (auto v = get<std::string>(root, "auth_token_env", "", problems)) c.auth_token_env = *v;
  if (auto v = get<std::string>(root, "mode", "", problems)) {
    try {
      c.mode = parse_mode(*v);
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
  if (const toml::node* node = root.get("threshold")) {
    if (auto v = node->value<double>()) c.threshold = *v;
    else problems.push_back("'threshold' must be a number");
  }
  if (auto v = get<bool>(root, "heuristics_only", "", problems)) c.heuristics_only = *v;
  if (auto v = get<std::string>(root, "model", "", problems)) c.model_path = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "rules", "", problems)) c.rules_path = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "request_log", "", problems)) {
    c.request_log = resolve(base_dir, *v);
  }
  if (auto v = get<bool>(root, "log_prompts", "", problems)) c.log_prompts = *v;
  if (auto v = get<std::int64_t>(root, "max_body_bytes", "", problems)) {
    if (*v <= 0) problems.push_back("'max_body_bytes' must be positive");
    else c.max_body_bytes = static_cast<std::size_t>(*v);
  }
  if (auto v = get<std::int64_t>(root, "worker_threads", "", problems)) {
    if (*v <= 0) problems.push_back("'worker_threads' must be positive");
    else c.worker_threads = static_cast<std::size_t>(*v);
  }

  if (const toml::node* node = root.get("timeouts")) {
    if (const toml::table* t = node->as_table()) {
      check_keys(*t, {"upstream_ms", "connect_ms"}, "timeouts.", problems);
      if (auto v = get<std::int64_t>(*t, "upstream_ms", "timeouts.", problems)) {
        c.upstream_timeout = positive_ms(*v, "timeouts.upstream_ms", problems);
      }
      if (auto v = get<std::int64_t>(*t, "connect_ms", "timeouts.", problems)) {
        c.connect_timeout = positive_ms(*v, "timeouts.connect_ms", problems);
      }
    } else {
      problems.push_back("'timeouts' must be a table");
    }
  }

  if (const toml::node* node = root.get("provider")) {
    if (const toml::table* t = node->as_table()) {
      const std::string w = "provider.";
      check_keys(*t,
                 {"backend", "dim", "model_path", "tokenizer_path", "max_sequence_length",
                  "endpoint", "timeout_ms", "max_in_flight"},
                 w, problems);
      auto& p = c.provider;
      if (auto v = get<std::string>(*t, "backend", w, problems)) {
        try {
          p.backend = embed::parse_backend(*v);
        } catch (const ConfigError& e) {
          problems.push_back(e.what());
        }
      }
      if (auto v = get<std::int64_t>(*t, "dim", w, problems)) {
        if (*v <= 0) problems.push_back("'provider.dim' must be positive");
        else p.dimension = static_cast<std::size_t>(*v);
      }
      if (auto v = get<std::string>(*t, "model_path", w, problems)) p.model_path = resolve(base_dir, *v);
      if (auto v = get<std::string>(*t, "tokenizer_path", w, problems)) {
        p.tokenizer_path = resolve(base_dir, *v);
      }
      if (auto v = get<std::int64_t>(*t, "max_sequence_length", w, problems)) {
        if (*v <= 0) problems.push_back("'provider.max_sequence_length' must be positive");
        else p.max_sequence_length = static_cast<std::size_t>(*v);
      }
      if (auto v = get<std::string>(*t, "endpoint", w, problems)) p.endpoint = *v;
      if (auto v = get<std::int64_t>(*t, "timeout_ms", w, problems)) {
        p.timeout = positive_ms(*v, "provider.timeout_ms", problems);
      }
      if (auto v = get<std::int64_t>(*t, "max_in_flight", w, problems)) {
        if (*v <= 0) problems.push_back("'provider.max_in_flight' must be positive");
        else p.max_in_flight = static_cast<std::size_t>(*v);
      }
    } else {
      problems.push_back("'provider' must be a table");
    }
  }

  if (!problems.empty()) {
    std::string message = "invalid gateway config:";
    for (const auto& p : problems) message += "\n  " + p;
    throw ConfigError(message);
  }
  return c;
}

GatewayConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

void apply_env_overrides(GatewayConfig& config, const EnvLookup& env) {
  if (auto v = env("SENTINEL_LISTEN"); v && !v->empty()) {
    parse_listen(*v, config.listen_host, config.listen_port);
  }
  if (auto v = env("SENTINEL_UPSTREAM"); v && !v->empty()) config.upstream = *v;
  if (auto v = env("SENTINEL_MODE"); v && !v->empty()) config.mode = parse_mode(*v);
  if (auto v = env("SENTINEL_THRESHOLD"); v && !v->empty()) {
    config.threshold = parse_double(*v, "SENTINEL_THRESHOLD");
  }
}

}  // namespace sentinel::gateway

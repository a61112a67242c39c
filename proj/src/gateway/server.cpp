#include <atomic>
#include <cctype>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include "detect/verdict_json.h"
#include "httplib.h"
#include "json.hpp"
#include "sentinel/errors.h"
#include "sentinel/gateway.h"
#include "util/url.h"

namespace sentinel::gateway {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kJson = "application/json";

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

json error_body(const std::string& message) { return json{{"error", message}}; }

// Verdict used when detection could not run. Block mode fails closed.
detect::DetectionVerdict unavailable_verdict(const DetectionState& state, Mode mode,
                                             const std::string& reason) {
  detect::DetectionVerdict v;
  v.degraded = true;
  v.error = reason;
  v.model_version = state.model_version;
  v.rule_pack_version = state.rule_pack_version;
  if (mode == Mode::kBlock) {
    v.label = fusion::Label::kInjection;
    v.p_injection = 1.0;
  }
  return v;
}

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

bool hop_by_hop(const std::string& name) {
  static const char* const kSkip[] = {"connection",          "keep-alive", "proxy-authenticate",
                                      "proxy-authorization", "te",         "trailer",
                                      "transfer-encoding",   "upgrade",    "content-length",
                                      "content-type"};
  for (const char* s : kSkip) {
    if (iequals(name, s)) return true;
  }
  return false;
}

std::int64_t unix_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class RequestLog {
 public:
  RequestLog(const std::filesystem::path& path, bool log_prompts) : log_prompts_(log_prompts) {
    if (path.empty()) return;
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) throw ConfigError("cannot open request log: " + path.string());
  }

  bool log_prompts() const noexcept { return log_prompts_; }

  void write(json entry) {
    if (!out_.is_open()) return;
    entry["ts_ms"] = unix_millis();
    const std::string line = entry.dump();
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
  }

 private:
  bool log_prompts_;
  std::mutex mu_;
  std::ofstream out_;
};

// Upstream exchange running on its own thread, handing the status line,
// headers and body chunks to the server thread that streams them back.
struct UpstreamStream {
  std::mutex mu;
  std::condition_variable cv;
  bool headers_ready = false;
  bool finished = false;
  bool failed = false;
  bool timed_out = false;
  bool cancelled = false;
  int status = 0;
  httplib::Headers headers;
  std::deque<std::string> chunks;
  std::string error;
};

struct UpstreamCall {
  std::string origin;
  std::string path;
  httplib::Headers headers;
  std::string body;
  std::string content_type;
  std::chrono::milliseconds connect_timeout;
  std::chrono::milliseconds read_timeout;
};

void run_upstream(const std::shared_ptr<UpstreamStream>& stream, const UpstreamCall& call) {
  httplib::Client client(call.origin);
  client.set_connection_timeout(call.connect_timeout);
  client.set_read_timeout(call.read_timeout);
  client.set_write_timeout(call.read_timeout);

  httplib::Request req;
  req.method = "POST";
  req.path = call.path;
  req.headers = call.headers;
  req.body = call.body;
  req.set_header("Content-Type", call.content_type);
  req.response_handler = [&](const httplib::Response& head) {
    std::lock_guard lock(stream->mu);
    stream->status = head.status;
    stream->headers = head.headers;
    stream->headers_ready = true;
    stream->cv.notify_all();
    return !stream->cancelled;
  };
  req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
    std::lock_guard lock(stream->mu);
    if (stream->cancelled) return false;
    stream->chunks.emplace_back(data, n);
    stream->cv.notify_all();
    return true;
  };

  httplib::Response res;
  httplib::Error err = httplib::Error::Success;
  const auto started = Clock::now();
  const bool ok = client.send(req, res, err);
  const auto elapsed = Clock::now() - started;

  std::lock_guard lock(stream->mu);
  if (!ok) {
    stream->failed = true;
    stream->error = httplib::to_string(err);
    stream->timed_out = err == httplib::Error::ConnectionTimeout ||
                        ((err == httplib::Error::Read || err == httplib::Error::Write) &&
                         elapsed >= call.read_timeout);
  } else if (!stream->headers_ready) {
    // 204 and friends skip the response handler.
    stream->status = res.status;
    stream->headers = res.headers;
    stream->headers_ready = true;
    if (!res.body.empty()) stream->chunks.push_back(res.body);
  }
  stream->finished = true;
  stream->cv.notify_all();
}

}  // namespace

std::shared_ptr<const DetectionState> build_state(const GatewayConfig& config) {
  std::shared_ptr<const rules::RulePack> pack;
  try {
    pack = config.rules_path.empty()
               ? std::make_shared<const rules::RulePack>(rules::default_rule_pack())
               : std::make_shared<const rules::RulePack>(rules::load_rule_pack(config.rules_path));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("rule pack: ") + e.what());
  }

  auto state = std::make_shared<DetectionState>();
  state->rule_pack_version = pack->version();
  if (config.heuristics_only) {
    state->detector = std::make_shared<detect::PipelineDetector>(pack, config.threshold);
    state->model_version = std::string(detect::kHeuristicsOnlyVersion);
    return state;
  }
  try {
    std::shared_ptr<const embed::EmbeddingProvider> provider = embed::make_provider(config.provider);
    fusion::ModelExpectations expect{provider->dimension(), pack->size(), pack->version()};
    auto model = fusion::load_params(config.model_path, expect);
    auto detector = std::make_shared<detect::PipelineDetector>(pack, std::move(provider),
                                                               std::move(model), config.threshold);
    state->model_version = detector->model_version();
    state->detector = std::move(detector);
  } catch (const Error& e) {
    state->degraded = true;
    state->degraded_reason = e.what();
    state->model_version = "unavailable";
  }
  return state;
}

struct Gateway::Impl {
  explicit Impl(GatewayConfig c) : config(std::move(c)), log(config.request_log, config.log_prompts) {}

  GatewayConfig config;
  RequestLog log;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> bound_port{0};

  mutable std::mutex state_mu;
  std::shared_ptr<const DetectionState> state;

  std::shared_ptr<const DetectionState> current() const {
    std::lock_guard lock(state_mu);
    return state;
  }

  void install_routes();
  void handle_detect(const httplib::Request& req, httplib::Response& res);
  void handle_chat(const httplib::Request& req, httplib::Response& res);
  void handle_health(httplib::Response& res);
  void handle_reload(httplib::Response& res);
  int bind();
};

void Gateway::Impl::install_routes() {
  const std::size_t threads = config.worker_threads;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server.set_payload_max_length(config.max_body_bytes);
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                  std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    reply_json(res, 500, error_body(message));
  });
  server.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) {
    handle_detect(req, res);
  });
  server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    handle_chat(req, res);
  });
  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    handle_health(res);
  });
  server.Post("/admin/reload", [this](const httplib::Request&, httplib::Response& res) {
    handle_reload(res);
  });
}

void Gateway::Impl::handle_detect(const httplib::Request& req, httplib::Response& res) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error&) {
    reply_json(res, 400, error_body("request body is not valid JSON"));
    return;
  }
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    reply_json(res, 400, error_body("request needs a string field `text`"));
    return;
  }
  const std::string text = body["text"].get<std::string>();
  if (blank(text)) {
    reply_json(res, 400, error_body("`text` is empty"));
    return;
  }

  const auto state = current();
  detect::DetectionVerdict verdict;
  int status = 200;
  if (!state->detector) {
    verdict = unavailable_verdict(*state, config.mode, state->degraded_reason);
    status = 503;
  } else {
    try {
      verdict = state->detector->detect(text);
    } catch (const ProviderError& e) {
      verdict = unavailable_verdict(*state, config.mode, e.what());
      status = 503;
    }
  }
  reply_json(res, status, detect::verdict_json(verdict));

  json entry{{"endpoint", "/v1/detect"}, {"status", status}, {"verdict", detect::verdict_json(verdict)}};
  if (log.log_prompts()) entry["prompt"] = text;
  log.write(std::move(entry));
}

void Gateway::Impl::handle_chat(const httplib::Request& req, httplib::Response& res) {
  std::vector<std::string> messages;
  try {
    messages = user_messages(req.body);
  } catch (const ParseError& e) {
    reply_json(res, 400, error_body(e.what()));
    return;
  }

  const auto state = current();
  detect::DetectionVerdict verdict;
  if (!state->detector) {
    verdict = unavailable_verdict(*state, config.mode, state->degraded_reason);
  } else {
    try {
      verdict = score_messages(*state->detector, messages);
    } catch (const ProviderError& e) {
      verdict = unavailable_verdict(*state, config.mode, e.what());
    }
  }

  json entry{{"endpoint", "/v1/chat/completions"}, {"verdict", detect::verdict_json(verdict)}};
  if (log.log_prompts()) entry["prompt"] = messages;

  if (config.mode == Mode::kBlock && verdict.label == fusion::Label::kInjection) {
    reply_json(res, 403, json{{"blocked", true}, {"verdict", detect::verdict_json(verdict)}});
    entry["action"] = "blocked";
    entry["status"] = 403;
    log.write(std::move(entry));
    return;
  }
  if (config.upstream.empty()) {
    reply_json(res, 502, error_body("no upstream configured"));
    entry["action"] = "no_upstream";
    entry["status"] = 502;
    log.write(std::move(entry));
    return;
  }

  const auto target = util::split_url(config.upstream);
  UpstreamCall call;
  call.origin = target.origin;
  call.path = target.path_prefix + "/chat/completions";
  call.body = req.body;
  call.content_type = req.has_header("Content-Type") ? req.get_header_value("Content-Type") : kJson;
  call.connect_timeout = config.connect_timeout;
  call.read_timeout = config.upstream_timeout;
  if (req.has_header("Accept")) call.headers.emplace("Accept", req.get_header_value("Accept"));
  std::optional<std::string> token;
  if (!config.auth_token_env.empty()) token = process_env(config.auth_token_env);
  if (token && !token->empty()) {
    call.headers.emplace("Authorization", "Bearer " + *token);
  } else if (req.has_header("Authorization")) {
    call.headers.emplace("Authorization", req.get_header_value("Authorization"));
  }

  auto stream = std::make_shared<UpstreamStream>();
  std::thread([stream, call = std::move(call)] { run_upstream(stream, call); }).detach();

  std::unique_lock lock(stream->mu);
  stream->cv.wait(lock, [&] { return stream->headers_ready || stream->finished; });
  if (!stream->headers_ready) {
    const int status = stream->timed_out ? 504 : 502;
    const std::string message = stream->timed_out ? "upstream timed out"
                                                  : "upstream request failed: " + stream->error;
    lock.unlock();
    reply_json(res, status, error_body(message));
    entry["action"] = "upstream_error";
    entry["status"] = status;
    log.write(std::move(entry));
    return;
  }

  res.status = stream->status;
  std::string content_type = kJson;
  for (const auto& [name, value] : stream->headers) {
    if (iequals(name, "content-type")) content_type = value;
    if (!hop_by_hop(name)) res.headers.emplace(name, value);
  }
  lock.unlock();
  if (config.mode == Mode::kFlag) {
    char score[32];
    std::snprintf(score, sizeof(score), "%.6f", verdict.p_injection);
    res.set_header("X-Injection-Score", score);
    res.set_header("X-Injection-Label",
                   verdict.degraded ? std::string("unavailable") : std::string(to_string(verdict.label)));
  }
  res.set_chunked_content_provider(
      content_type,
      [stream](std::size_t, httplib::DataSink& sink) {
        std::unique_lock lk(stream->mu);
        stream->cv.wait(lk, [&] { return !stream->chunks.empty() || stream->finished; });
        while (!stream->chunks.empty()) {
          std::string chunk = std::move(stream->chunks.front());
          stream->chunks.pop_front();
          lk.unlock();
          if (!sink.write(chunk.data(), chunk.size())) return false;
          lk.lock();
        }
        if (stream->finished) {
          if (stream->failed) return false;  // upstream died mid-body: drop the connection
          sink.done();
        }
        return true;
      },
      [stream](bool) {
        std::lock_guard lk(stream->mu);
        stream->cancelled = true;
      });

  entry["action"] = config.mode == Mode::kFlag ? "flagged" : "forwarded";
  entry["status"] = res.status;
  log.write(std::move(entry));
}

void Gateway::Impl::handle_health(httplib::Response& res) {
  const auto state = current();
  json body{{"status", state->degraded ? "degraded" : "ok"},
            {"model_version", state->model_version},
            {"rule_pack_version", state->rule_pack_version},
            {"mode", to_string(config.mode)}};
  if (state->degraded) body["reason"] = state->degraded_reason;
  reply_json(res, state->degraded ? 503 : 200, body);
}

void Gateway::Impl::handle_reload(httplib::Response& res) {
  try {
    auto fresh = build_state(config);
    {
      std::lock_guard lock(state_mu);
      state = fresh;
    }
    handle_health(res);
  } catch (const Error& e) {
    reply_json(res, 500, error_body(std::string("reload failed: ") + e.what()));
  }
}

int Gateway::Impl::bind() {
  int port = config.listen_port;
  if (port == 0) {
    port = server.bind_to_any_port(config.listen_host);
    if (port < 0) throw ConfigError("cannot bind " + config.listen_host);
  } else if (!server.bind_to_port(config.listen_host, port)) {
    throw ConfigError("cannot bind " + config.listen_host + ":" + std::to_string(port));
  }
  bound_port = port;
  return port;
}

Gateway::Gateway(GatewayConfig config) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
  impl_->state = build_state(impl_->config);
  impl_->install_routes();
}

Gateway::~Gateway() { stop(); }

int Gateway::start() {
  const int port = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Gateway::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void Gateway::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Gateway::port() const noexcept { return impl_->bound_port; }

void Gateway::reload() {
  auto fresh = build_state(impl_->config);
  std::lock_guard lock(impl_->state_mu);
  impl_->state = std::move(fresh);
}

std::shared_ptr<const DetectionState> Gateway::state() const { return impl_->current(); }

const GatewayConfig& Gateway::config() const noexcept { return impl_->config; }

}  // namespace sentinel::gateway

#include <httplib.h>

#include <cstdlib>

#include "persuade/gateway.hpp"

namespace persuade {

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

/// Splits "https://host:port/prefix" into ("https://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

std::optional<LiveConfig> LiveConfig::from_env() {
  LiveConfig c;
  c.base_url = env_or("PERSUADE_LLM_BASE_URL");
  c.model_id = env_or("PERSUADE_LLM_MODEL");
  c.api_key = env_or("PERSUADE_LLM_API_KEY");
  if (c.base_url.empty() || c.model_id.empty()) return std::nullopt;
  c.max_concurrent = std::max(1, std::atoi(env_or("PERSUADE_LLM_MAX_CONCURRENT", "4").c_str()));
  c.requests_per_minute = std::max(1, std::atoi(env_or("PERSUADE_LLM_RPM", "60").c_str()));
  return c;
}

json live_request_body(const ChatRequest& request, const std::string& model_id) {
  json body{{"model", model_id},
            {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
            {"max_tokens", request.max_output}};
  if (request.temperature) body["temperature"] = *request.temperature;
  return body;
}

ChatResponse live_response_from_body(const json& body) {
  const json& choices = body.at("choices");
  if (!choices.is_array() || choices.empty()) {
    throw GatewayError(ErrorKind::kTransport, "provider reply has no choices");
  }
  const json& message = choices.at(0).at("message");
  ChatResponse r;
  r.text = message.at("content").is_string() ? message["content"].get<std::string>() : "";
  if (body.contains("usage") && body["usage"].is_object()) {
    r.usage.prompt_tokens = body["usage"].value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = body["usage"].value("completion_tokens", std::int64_t{0});
  }
  r.backend = BackendKind::kLive;
  return r;
}

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw Error(ErrorKind::kConfig, "live backend needs a base URL");
  }
}

LiveBackend::~LiveBackend() = default;

void LiveBackend::acquire() {
  using clock = std::chrono::steady_clock;
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < config_.max_concurrent; });
  ++in_flight_;
  // Sliding one-minute window over request start times.
  while (true) {
    const auto now = clock::now();
    while (!recent_.empty() && now - recent_.front() >= std::chrono::minutes(1)) {
      recent_.pop_front();
    }
    if (static_cast<int>(recent_.size()) < config_.requests_per_minute) {
      recent_.push_back(now);
      return;
    }
    cv_.wait_until(lock, recent_.front() + std::chrono::minutes(1));
  }
}

void LiveBackend::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_all();
}

ChatResponse LiveBackend::complete(const ChatRequest& request) {
  const auto [origin, prefix] = split_base_url(config_.base_url);
  const std::string model = config_.model_id.empty() ? request.model_id : config_.model_id;
  const std::string payload = live_request_body(request, model).dump();

  acquire();
  struct Release {
    LiveBackend* self;
    ~Release() { self->release(); }
  } guard{this};

  httplib::Client client(origin);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  const auto started = std::chrono::steady_clock::now();
  auto result = client.Post(prefix + "/chat/completions", headers, payload, "application/json");
  const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);

  if (!result) {
    const auto err = result.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      throw GatewayError(ErrorKind::kTimeout, "request timed out: " + httplib::to_string(err));
    }
    throw GatewayError(ErrorKind::kTransport, "transport failure: " + httplib::to_string(err));
  }
  if (result->status == 429) {
    throw GatewayError(ErrorKind::kRateLimited, "provider rate limit (429)", 429);
  }
  if (result->status < 200 || result->status >= 300) {
    throw GatewayError(ErrorKind::kHttpStatus,
                       "provider returned status " + std::to_string(result->status),
                       result->status);
  }
  json body = json::parse(result->body, nullptr, false);
  if (body.is_discarded()) {
    throw GatewayError(ErrorKind::kTransport, "provider reply is not JSON");
  }
  try {
    ChatResponse r = live_response_from_body(body);
    r.latency = latency;
    return r;
  } catch (const json::exception& e) {
    throw GatewayError(ErrorKind::kTransport, std::string("unexpected provider reply: ") +
                                                  e.what());
  }
}

}  // namespace persuade

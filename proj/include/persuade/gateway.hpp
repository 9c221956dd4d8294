#pragma once

// Provider-agnostic chat completion. Three interchangeable backends sit
// behind ChatBackend: a live HTTP provider, a scripted table for tests, and a
// record/replay cache.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "persuade/domain.hpp"
#include "persuade/error.hpp"

namespace persuade {

enum class AgentRole {
  kConfigurator,
  kWorldModel,
  kPersuader,
  kPerception,
  kPersuadee,
  kJudge,
  kScorer,
  kAbJudge,
};

std::string_view role_name(AgentRole role);
std::optional<AgentRole> role_from_name(std::string_view name);

/// Judge-like roles default to temperature 0; generative roles leave the
/// provider default in place.
std::optional<double> default_temperature(AgentRole role);

struct ChatRequest {
  AgentRole role = AgentRole::kPersuader;
  std::string prompt;
  std::string model_id = "default";
  std::optional<double> temperature;
  int max_output = 1024;
  std::string episode_id;
  int turn_index = 0;
  /// 1-based attempt number within complete_parsed.
  int attempt = 1;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  Usage& operator+=(const Usage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    return *this;
  }
  bool operator==(const Usage&) const = default;
};

/// Whitespace-separated word count; the usage estimate of offline backends.
std::int64_t approx_tokens(std::string_view text);

enum class BackendKind { kLive, kScripted, kReplay };

std::string_view backend_kind_name(BackendKind kind);

struct ChatResponse {
  std::string text;
  Usage usage;
  std::chrono::milliseconds latency{0};
  BackendKind backend = BackendKind::kScripted;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Implementations must be safe for concurrent calls.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Validates the request, then forwards it.
ChatResponse complete(ChatBackend& backend, const ChatRequest& request);

/// Table of canned replies keyed by (role, episode, turn, attempt). Entries
/// may leave episode ("*"), turn (0) or attempt (0) open; the most specific
/// match wins, episode first. Misses are hard errors.
class ScriptedBackend : public ChatBackend {
 public:
  static constexpr std::string_view kAnyEpisode = "*";
  static constexpr int kAny = 0;

  ScriptedBackend() = default;

  void add(AgentRole role, std::string episode_id, int turn_index, int attempt,
           std::string text);

  /// {"entries": [{"role", "episode", "turn", "attempt", "text"}, ...]}
  static std::unique_ptr<ScriptedBackend> from_json(const json& doc);
  static std::unique_ptr<ScriptedBackend> load(const std::filesystem::path& path);

  ChatResponse complete(const ChatRequest& request) override;

  std::size_t call_count() const { return calls_.load(); }
  std::size_t size() const { return script_.size(); }

 private:
  using Key = std::tuple<AgentRole, std::string, int, int>;
  std::map<Key, std::string> script_;
  std::atomic<std::size_t> calls_{0};
};

/// Hex SHA-256 over (role, model, prompt); the replay cache key.
std::string replay_key(const ChatRequest& request);

/// Serves recorded responses from a cache directory (one file per key).
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(std::filesystem::path dir);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::filesystem::path dir_;
};

/// Forwards to `inner` and writes each response into the cache directory.
/// Existing entries are served without calling `inner`.
class RecordingBackend : public ChatBackend {
 public:
  RecordingBackend(ChatBackend& inner, std::filesystem::path dir);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  ChatBackend& inner_;
  ReplayBackend replay_;
  std::filesystem::path dir_;
  std::mutex write_mu_;
};

/// Counts calls and sums usage of everything passing through.
class MeteredBackend : public ChatBackend {
 public:
  explicit MeteredBackend(ChatBackend& inner) : inner_(inner) {}
  ChatResponse complete(const ChatRequest& request) override;

  std::size_t calls() const;
  Usage usage() const;

 private:
  ChatBackend& inner_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
  Usage usage_;
};

struct LiveConfig {
  /// e.g. "https://api.openai.com/v1"; "/chat/completions" is appended.
  std::string base_url;
  std::string api_key;
  std::string model_id;
  std::chrono::seconds timeout{60};
  int max_concurrent = 4;
  int requests_per_minute = 60;

  /// PERSUADE_LLM_BASE_URL, PERSUADE_LLM_API_KEY, PERSUADE_LLM_MODEL,
  /// PERSUADE_LLM_MAX_CONCURRENT, PERSUADE_LLM_RPM.
  static std::optional<LiveConfig> from_env();
};

/// Chat-completions over HTTP with a global concurrency cap and a
/// per-minute request limit.
class LiveBackend : public ChatBackend {
 public:
  explicit LiveBackend(LiveConfig config);
  ~LiveBackend() override;
  ChatResponse complete(const ChatRequest& request) override;

 private:
  void acquire();
  void release();

  LiveConfig config_;
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::deque<std::chrono::steady_clock::time_point> recent_;
};

/// Builds the request body sent by LiveBackend.
json live_request_body(const ChatRequest& request, const std::string& model_id);
/// Extracts choices[0].message.content and usage from a provider reply.
ChatResponse live_response_from_body(const json& body);

/// Instruction appended to a retried prompt after a parse failure.
std::string corrective_suffix(const std::string& error_message);

/// Calls the backend until `parse` accepts the reply, re-issuing the request
/// with the parse error appended, for at most `max_attempts` calls in total.
/// Throws ParseFailure carrying every raw reply when attempts run out.
template <typename Parser>
auto complete_parsed(ChatBackend& backend, ChatRequest request, Parser&& parse,
                     int max_attempts) -> decltype(parse(std::string_view{})) {
  if (max_attempts < 1) {
    throw Error(ErrorKind::kPrecondition, "max_attempts must be at least 1");
  }
  const std::string base_prompt = request.prompt;
  std::vector<std::string> raw_attempts;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    request.attempt = attempt;
    request.prompt = attempt == 1 ? base_prompt : base_prompt + corrective_suffix(last_error);
    ChatResponse response = complete(backend, request);
    raw_attempts.push_back(response.text);
    try {
      return parse(std::string_view(raw_attempts.back()));
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw ParseFailure(std::string(role_name(request.role)) + " reply unparseable after " +
                         std::to_string(max_attempts) + " attempt(s): " + last_error,
                     std::move(raw_attempts));
}

/// Backend from a CLI spec: "live", "scripted:<file>", "replay:<dir>", or
/// "record:<dir>" (live provider, cached).
std::unique_ptr<ChatBackend> make_backend(std::string_view spec);

}  // namespace persuade

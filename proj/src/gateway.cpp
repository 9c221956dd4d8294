#include "persuade/gateway.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <fstream>
#include <sstream>

#include "persuade/hashing.hpp"
#include "text_util.hpp"

namespace persuade {

namespace {

constexpr std::array<std::pair<AgentRole, std::string_view>, 8> kRoles = {{
    {AgentRole::kConfigurator, "configurator"},
    {AgentRole::kWorldModel, "world_model"},
    {AgentRole::kPersuader, "persuader"},
    {AgentRole::kPerception, "perception"},
    {AgentRole::kPersuadee, "persuadee"},
    {AgentRole::kJudge, "judge"},
    {AgentRole::kScorer, "scorer"},
    {AgentRole::kAbJudge, "ab_judge"},
}};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string_view role_name(AgentRole role) {
  for (const auto& [r, name] : kRoles) {
    if (r == role) return name;
  }
  return "unknown";
}

std::optional<AgentRole> role_from_name(std::string_view name) {
  for (const auto& [r, n] : kRoles) {
    if (n == name) return r;
  }
  return std::nullopt;
}

std::optional<double> default_temperature(AgentRole role) {
  switch (role) {
    case AgentRole::kJudge:
    case AgentRole::kScorer:
    case AgentRole::kAbJudge:
      return 0.0;
    default:
      return std::nullopt;
  }
}

std::int64_t approx_tokens(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::string_view backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::kLive: return "live";
    case BackendKind::kScripted: return "scripted";
    case BackendKind::kReplay: return "replay";
  }
  return "unknown";
}

ChatResponse complete(ChatBackend& backend, const ChatRequest& request) {
  if (request.prompt.empty()) {
    throw Error(ErrorKind::kPrecondition, "chat request has an empty prompt");
  }
  if (request.temperature && *request.temperature < 0) {
    throw Error(ErrorKind::kPrecondition, "temperature must be non-negative");
  }
  return backend.complete(request);
}

std::string corrective_suffix(const std::string& error_message) {
  return "\n\nYour previous reply could not be used: " + error_message +
         "\nReply again and follow the required output format exactly.";
}

// ---------------------------------------------------------------------------
// Scripted

void ScriptedBackend::add(AgentRole role, std::string episode_id, int turn_index,
                          int attempt, std::string text) {
  script_[Key{role, std::move(episode_id), turn_index, attempt}] = std::move(text);
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& doc) {
  auto backend = std::make_unique<ScriptedBackend>();
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw Error(ErrorKind::kSchema, "script must be an object with an 'entries' array");
  }
  for (std::size_t i = 0; i < doc["entries"].size(); ++i) {
    const auto& e = doc["entries"][i];
    const std::string path = "entries[" + std::to_string(i) + "]";
    auto role = role_from_name(e.value("role", ""));
    if (!role) throw Error(ErrorKind::kSchema, path + ".role: unknown role");
    if (!e.contains("text") || !e["text"].is_string()) {
      throw Error(ErrorKind::kSchema, path + ".text: must be text");
    }
    backend->add(*role, e.value("episode", std::string(kAnyEpisode)), e.value("turn", kAny),
                 e.value("attempt", kAny), e["text"].get<std::string>());
  }
  return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::load(const std::filesystem::path& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::kSchema, path.string() + ": invalid JSON");
  return from_json(doc);
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  ++calls_;
  const std::string any(kAnyEpisode);
  for (const std::string* episode : {&request.episode_id, &any}) {
    for (int turn : {request.turn_index, kAny}) {
      for (int attempt : {request.attempt, kAny}) {
        auto it = script_.find(Key{request.role, *episode, turn, attempt});
        if (it != script_.end()) {
          ChatResponse r;
          r.text = it->second;
          r.usage = {approx_tokens(request.prompt), approx_tokens(r.text)};
          r.backend = BackendKind::kScripted;
          return r;
        }
      }
    }
  }
  throw GatewayError(ErrorKind::kScriptMiss,
                     "no scripted reply for (" + std::string(role_name(request.role)) + ", " +
                         request.episode_id + ", turn " + std::to_string(request.turn_index) +
                         ", attempt " + std::to_string(request.attempt) + ")");
}

// ---------------------------------------------------------------------------
// Replay / record

std::string replay_key(const ChatRequest& request) {
  std::string material;
  material.append(role_name(request.role));
  material.push_back('\0');
  material.append(request.model_id);
  material.push_back('\0');
  material.append(request.prompt);
  return sha256_hex(material);
}

ReplayBackend::ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
  const std::string key = replay_key(request);
  const auto path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) {
    throw GatewayError(ErrorKind::kReplayMiss,
                       "no recording for " + std::string(role_name(request.role)) +
                           " request " + key.substr(0, 12));
  }
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.contains("text")) {
    throw GatewayError(ErrorKind::kReplayMiss, "corrupt recording " + path.string());
  }
  if (doc.value("request_digest", "") != sha256_hex(request.prompt)) {
    throw GatewayError(ErrorKind::kReplayMiss, "recording digest mismatch for " + key);
  }
  ChatResponse r;
  r.text = doc["text"].get<std::string>();
  r.usage.prompt_tokens = doc.value(json::json_pointer("/usage/prompt_tokens"), std::int64_t{0});
  r.usage.completion_tokens = doc.value(json::json_pointer("/usage/completion_tokens"), std::int64_t{0});
  r.backend = BackendKind::kReplay;
  return r;
}

RecordingBackend::RecordingBackend(ChatBackend& inner, std::filesystem::path dir)
    : inner_(inner), replay_(dir), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
  try {
    return replay_.complete(request);
  } catch (const GatewayError& e) {
    if (e.kind() != ErrorKind::kReplayMiss) throw;
  }
  ChatResponse response = inner_.complete(request);
  const std::string key = replay_key(request);
  json doc{{"key", key},
           {"role", role_name(request.role)},
           {"model_id", request.model_id},
           {"request_digest", sha256_hex(request.prompt)},
           {"text", response.text},
           {"usage",
            {{"prompt_tokens", response.usage.prompt_tokens},
             {"completion_tokens", response.usage.completion_tokens}}}};
  std::lock_guard lock(write_mu_);
  const auto path = dir_ / (key + ".json");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
  return response;
}

// ---------------------------------------------------------------------------
// Metering

ChatResponse MeteredBackend::complete(const ChatRequest& request) {
  ChatResponse r = inner_.complete(request);
  std::lock_guard lock(mu_);
  ++calls_;
  usage_ += r.usage;
  return r;
}

std::size_t MeteredBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

Usage MeteredBackend::usage() const {
  std::lock_guard lock(mu_);
  return usage_;
}

// ---------------------------------------------------------------------------

namespace {

class CachedLiveBackend : public ChatBackend {
 public:
  CachedLiveBackend(LiveConfig config, std::filesystem::path dir)
      : live_(std::move(config)), recorder_(live_, std::move(dir)) {}
  ChatResponse complete(const ChatRequest& request) override {
    return recorder_.complete(request);
  }

 private:
  LiveBackend live_;
  RecordingBackend recorder_;
};

LiveConfig required_live_config() {
  auto config = LiveConfig::from_env();
  if (!config) {
    throw Error(ErrorKind::kConfig,
                "live backend needs PERSUADE_LLM_BASE_URL and PERSUADE_LLM_MODEL");
  }
  return *config;
}

}  // namespace

std::unique_ptr<ChatBackend> make_backend(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string arg =
      colon == std::string_view::npos ? std::string() : std::string(spec.substr(colon + 1));
  if (kind == "live") return std::make_unique<LiveBackend>(required_live_config());
  if (kind == "scripted" && !arg.empty()) return ScriptedBackend::load(arg);
  if (kind == "replay" && !arg.empty()) return std::make_unique<ReplayBackend>(arg);
  if (kind == "record" && !arg.empty()) {
    return std::make_unique<CachedLiveBackend>(required_live_config(), arg);
  }
  throw Error(ErrorKind::kConfig, "unrecognized backend '" + std::string(spec) +
                                      "'; expected live, scripted:<file>, replay:<dir> or "
                                      "record:<dir>");
}

}  // namespace persuade

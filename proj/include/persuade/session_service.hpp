#pragma once

// Blind human-in-the-loop protocols: live chats where a person plays the
// persuadee, and A/B annotation of dialogue pairs. Transport independent;
// http_api.hpp binds it to HTTP.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "persuade/episode.hpp"
#include "persuade/knowledge_base.hpp"
#include "persuade/metrics.hpp"

namespace persuade {

enum class SystemArm { kBaseline, kMetacognitive };

std::string_view arm_name(SystemArm arm);

enum class ArmPolicy { kUniform, kBaseline, kMetacognitive };

std::optional<ArmPolicy> arm_policy_from_name(std::string_view name);

enum class SessionStatus { kAwaitingHuman, kAwaitingSystem, kFinished };

std::string_view session_status_name(SessionStatus status);

/// Service-level failure with the HTTP status it maps to.
class ServiceError : public Error {
 public:
  ServiceError(int http_status, std::string code, const std::string& message)
      : Error(ErrorKind::kValidation, message), status_(http_status), code_(std::move(code)) {}

  int http_status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceConfig {
  /// t_max, model id and attempt limits for live sessions.
  EpisodeConfig episode;
  std::size_t max_input_chars = 2000;
  std::chrono::seconds idle_timeout{1800};
  std::uint64_t seed = 0;
  ArmPolicy default_policy = ArmPolicy::kUniform;
  /// Finished sessions go to <data_dir>/sessions/, verdicts are appended to
  /// <data_dir>/judgments.jsonl.
  std::optional<std::filesystem::path> data_dir;
};

/// A dialogue pair for blind rating. `baseline` and `treatment` are never
/// shown under those names.
struct AnnotationTask {
  std::string task_id;
  std::string scenario_id;
  Transcript baseline;
  Transcript treatment;
  /// The LLM judge's canonical verdict on this pair, when available.
  std::optional<AbOutcome> llm_outcome;
};

/// {"tasks": [{task_id, scenario_id, baseline: [...], treatment: [...],
/// llm_verdict?}]}
std::vector<AnnotationTask> annotation_tasks_from_json(const json& doc);
json annotation_tasks_to_json(const std::vector<AnnotationTask>& tasks);

/// Reads a rater's displayed choice: dialogue1 / dialogue2 / tie, or the
/// second dialogue relative to the first as better / comparable / worse
/// (also win / tie / lose).
std::optional<AbVerdict> parse_displayed_verdict(std::string_view text);

class SessionService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  SessionService(std::map<std::string, Scenario> scenarios, KnowledgeBase kb,
                 ChatBackend& backend, ServiceConfig config, Clock clock = {});
  ~SessionService();

  // Chat sessions. Every payload is client-visible and blind.
  json list_scenarios() const;
  json create_session(const std::string& scenario_id, std::optional<ArmPolicy> policy = {});
  json post_turn(const std::string& session_id, const std::string& text);
  /// `reveal` adds arm and meta-strategy, only once the session is finished.
  json get_session(const std::string& session_id, bool reveal = false);
  /// Finishes idle sessions as non-successes; returns how many expired.
  std::size_t expire_idle();
  /// Records of finished sessions, in completion order.
  std::vector<EpisodeRecord> finished_records() const;

  // Annotation.
  void add_tasks(std::vector<AnnotationTask> tasks);
  json next_annotation(const std::string& rater);
  json submit_verdict(const std::string& task_id, const std::string& rater,
                      const std::string& verdict);
  std::vector<AbJudgment> judgments() const;
  /// Weighted kappa between each rater and the LLM judge on shared items,
  /// and the mean over raters.
  json agreement() const;

 private:
  struct Session;
  struct Assignment {
    DisplayOrder order;
    std::optional<AbOutcome> outcome;
  };

  std::shared_ptr<Session> find_session(const std::string& id) const;
  json view(const Session& s, bool reveal) const;
  void finish_locked(Session& s, bool expired);
  void persist(const Session& s) const;
  std::chrono::steady_clock::time_point now() const;

  std::map<std::string, Scenario> scenarios_;
  KnowledgeBase kb_;
  ChatBackend& backend_;
  ServiceConfig config_;
  Clock clock_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<EpisodeRecord> finished_;
  std::mt19937_64 rng_;
  std::uint64_t next_session_ = 1;

  mutable std::mutex tasks_mu_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> task_index_;
  std::map<std::pair<std::string, std::string>, Assignment> assignments_;
  std::vector<AbJudgment> judgments_;
};

}  // namespace persuade

#include "persuade/session_service.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <fstream>

#include "persuade/corpus.hpp"
#include "persuade/hashing.hpp"
#include "text_util.hpp"

namespace persuade {

struct SessionService::Session {
  std::string id;
  Scenario scenario;
  SystemArm arm = SystemArm::kBaseline;
  std::mutex mu;
  std::atomic<SessionStatus> status{SessionStatus::kAwaitingSystem};
  std::unique_ptr<EpisodeRunner> runner;
  std::optional<EpisodeRecord> record;
  std::optional<std::string> ended_by;
  std::chrono::steady_clock::time_point last_activity;
};

namespace {

json messages_json(const Transcript& t) {
  json out = json::array();
  for (const auto& u : t.utterances()) {
    out.push_back({{"speaker", speaker_name(u.speaker)}, {"turn", u.turn_index}, {"text", u.text}});
  }
  return out;
}

Transcript transcript_from_json(const json& doc, const std::string& where) {
  if (!doc.is_array()) throw Error(ErrorKind::kSchema, where + ": must be a list of utterances");
  Transcript t;
  for (const auto& u : doc) t.append(u.get<Utterance>());
  return t;
}

bool is_gateway_failure(const Error& e) {
  return dynamic_cast<const GatewayError*>(&e) || dynamic_cast<const ParseFailure*>(&e);
}

}  // namespace

std::string_view arm_name(SystemArm arm) {
  return arm == SystemArm::kBaseline ? "baseline" : "metacognitive";
}

std::optional<ArmPolicy> arm_policy_from_name(std::string_view name) {
  if (name == "uniform") return ArmPolicy::kUniform;
  if (name == "baseline") return ArmPolicy::kBaseline;
  if (name == "metacognitive") return ArmPolicy::kMetacognitive;
  return std::nullopt;
}

std::string_view session_status_name(SessionStatus status) {
  switch (status) {
    case SessionStatus::kAwaitingHuman: return "awaiting_human";
    case SessionStatus::kAwaitingSystem: return "awaiting_system";
    case SessionStatus::kFinished: return "finished";
  }
  return "unknown";
}

std::optional<AbVerdict> parse_displayed_verdict(std::string_view text) {
  std::string v;
  for (char c : to_lower(trim(text))) {
    if (!is_space(c) && c != '_' && c != '-') v.push_back(c);
  }
  if (v == "dialogue1" || v == "worse" || v == "lose") return AbVerdict::kDialogue1;
  if (v == "dialogue2" || v == "better" || v == "win") return AbVerdict::kDialogue2;
  if (v == "tie" || v == "comparable") return AbVerdict::kTie;
  return std::nullopt;
}

std::vector<AnnotationTask> annotation_tasks_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array()) {
    throw Error(ErrorKind::kSchema, "annotation file must hold a 'tasks' list");
  }
  std::vector<AnnotationTask> out;
  for (std::size_t i = 0; i < doc["tasks"].size(); ++i) {
    const json& t = doc["tasks"][i];
    const std::string where = "tasks[" + std::to_string(i) + "]";
    try {
      AnnotationTask task;
      task.task_id = t.at("task_id").get<std::string>();
      task.scenario_id = t.at("scenario_id").get<std::string>();
      task.baseline = transcript_from_json(t.at("baseline"), where + ".baseline");
      task.treatment = transcript_from_json(t.at("treatment"), where + ".treatment");
      if (t.contains("llm_verdict") && !t["llm_verdict"].is_null()) {
        task.llm_outcome = ab_outcome_from_name(t["llm_verdict"].get<std::string>());
        if (!task.llm_outcome) {
          throw Error(ErrorKind::kSchema, where + ".llm_verdict: must be win, tie or lose");
        }
      }
      out.push_back(std::move(task));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kSchema, where + ": " + e.what());
    }
  }
  return out;
}

json annotation_tasks_to_json(const std::vector<AnnotationTask>& tasks) {
  json list = json::array();
  for (const auto& t : tasks) {
    json row{{"task_id", t.task_id},
             {"scenario_id", t.scenario_id},
             {"baseline", t.baseline.utterances()},
             {"treatment", t.treatment.utterances()}};
    row["llm_verdict"] = t.llm_outcome ? json(ab_outcome_name(*t.llm_outcome)) : json(nullptr);
    list.push_back(std::move(row));
  }
  return {{"tasks", std::move(list)}};
}

SessionService::SessionService(std::map<std::string, Scenario> scenarios, KnowledgeBase kb,
                               ChatBackend& backend, ServiceConfig config, Clock clock)
    : scenarios_(std::move(scenarios)),
      kb_(std::move(kb)),
      backend_(backend),
      config_(std::move(config)),
      clock_(std::move(clock)),
      rng_(config_.seed) {
  config_.episode.validate();
  if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
}

SessionService::~SessionService() = default;

std::chrono::steady_clock::time_point SessionService::now() const { return clock_(); }

json SessionService::list_scenarios() const {
  json out = json::array();
  for (const auto& [id, s] : scenarios_) {
    out.push_back({{"id", id}, {"background", s.background}, {"persuadee", s.persuadee_name}});
  }
  return {{"scenarios", std::move(out)}};
}

std::shared_ptr<SessionService::Session> SessionService::find_session(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "unknown session " + id);
  return it->second;
}

json SessionService::view(const Session& s, bool reveal) const {
  const auto status = s.status.load();
  json out{{"session_id", s.id},
           {"status", session_status_name(status)},
           {"turn", s.runner->turns_completed()},
           {"t_max", config_.episode.t_max},
           {"scenario",
            {{"id", s.scenario.id},
             {"background", s.scenario.background},
             {"persuadee", s.scenario.persuadee_name}}},
           {"messages", messages_json(s.record ? s.record->transcript
                                               : s.runner->memory().transcript)}};
  if (status == SessionStatus::kFinished && s.record) {
    json outcome{{"success", s.record->outcome.success},
                 {"turns_used", s.record->outcome.turns_used}};
    outcome["success_turn"] =
        s.record->outcome.success_turn ? json(*s.record->outcome.success_turn) : json(nullptr);
    outcome["ended_by"] = s.ended_by ? json(*s.ended_by) : json(nullptr);
    out["outcome"] = std::move(outcome);
    if (reveal) {
      out["reveal"] = {{"arm", arm_name(s.arm)},
                       {"meta_strategy", s.record->selected_meta_strategy
                                             ? json(*s.record->selected_meta_strategy)
                                             : json(nullptr)}};
    }
  } else {
    out["outcome"] = nullptr;
  }
  return out;
}

void SessionService::persist(const Session& s) const {
  if (!config_.data_dir || !s.record) return;
  json doc = record_to_json(*s.record);
  doc["session_id"] = s.id;
  doc["arm"] = arm_name(s.arm);
  write_json_atomic(*config_.data_dir / "sessions" / (s.id + ".json"), doc);
}

void SessionService::finish_locked(Session& s, bool expired) {
  if (expired) {
    s.record = s.runner->abort("idle_expired");
    s.ended_by = "expired";
  } else {
    s.record = s.runner->finish();
    s.ended_by = s.record->outcome.success ? "accepted" : "turn_limit";
  }
  s.status = SessionStatus::kFinished;
  persist(s);
  std::lock_guard lock(sessions_mu_);
  finished_.push_back(*s.record);
}

json SessionService::create_session(const std::string& scenario_id,
                                    std::optional<ArmPolicy> policy) {
  expire_idle();
  auto it = scenarios_.find(scenario_id);
  if (it == scenarios_.end()) {
    throw ServiceError(404, "not_found", "unknown scenario " + scenario_id);
  }
  auto session = std::make_shared<Session>();
  session->scenario = it->second;
  {
    std::lock_guard lock(sessions_mu_);
    const ArmPolicy p = policy.value_or(config_.default_policy);
    if (p == ArmPolicy::kUniform) {
      session->arm = (rng_() & 1U) ? SystemArm::kMetacognitive : SystemArm::kBaseline;
    } else {
      session->arm = p == ArmPolicy::kBaseline ? SystemArm::kBaseline : SystemArm::kMetacognitive;
    }
    session->id = "s-" + sha256_hex(fmt::format("{}:{}", config_.seed, next_session_++)).substr(0, 16);
  }
  EpisodeConfig cfg = config_.episode;
  cfg.kb_mode = session->arm == SystemArm::kMetacognitive ? KbMode::kFull : KbMode::kNoKb;
  cfg.persuadee_source = PersuadeeSource::kExternal;
  cfg.per_turn_judging = true;
  cfg.write_back = false;
  cfg.attribution_seed.reset();
  session->runner = std::make_unique<EpisodeRunner>(kb_, session->scenario, cfg, backend_);

  std::lock_guard session_lock(session->mu);
  try {
    session->runner->configure();
    session->runner->system_turn();
  } catch (const Error& e) {
    if (!is_gateway_failure(e)) throw;
    spdlog::warn("session for {} aborted at start: {}", scenario_id, e.what());
    throw ServiceError(502, "backend_failure", "the system could not start the conversation");
  }
  session->status = SessionStatus::kAwaitingHuman;
  session->last_activity = now();
  {
    std::lock_guard lock(sessions_mu_);
    sessions_.emplace(session->id, session);
  }
  return view(*session, false);
}

json SessionService::post_turn(const std::string& session_id, const std::string& text) {
  expire_idle();
  auto session = find_session(session_id);
  std::unique_lock lock(session->mu, std::try_to_lock);
  if (!lock.owns_lock()) {
    throw ServiceError(409, "turn_in_progress", "a turn is already being processed");
  }
  if (session->status != SessionStatus::kAwaitingHuman) {
    throw ServiceError(409, "invalid_state", fmt::format("session is {}",
                                                         session_status_name(session->status)));
  }
  if (text.size() > config_.max_input_chars) {
    throw ServiceError(413, "input_too_large",
                       fmt::format("reply exceeds {} characters", config_.max_input_chars));
  }
  const std::string reply = trim(text);
  if (reply.empty()) throw ServiceError(400, "validation", "reply must not be empty");

  session->status = SessionStatus::kAwaitingSystem;
  try {
    session->runner->external_reply(reply);
    const bool accepted = session->runner->judge_turn();
    if (accepted || session->runner->finished()) {
      finish_locked(*session, false);
    } else {
      session->runner->system_turn();
      session->status = SessionStatus::kAwaitingHuman;
    }
  } catch (const Error& e) {
    if (!is_gateway_failure(e)) {
      session->status = SessionStatus::kAwaitingHuman;
      throw;
    }
    spdlog::warn("session {} aborted: {}", session_id, e.what());
    session->record = session->runner->abort(std::string(error_kind_name(e.kind())));
    session->ended_by = "error";
    session->status = SessionStatus::kFinished;
    persist(*session);
    {
      std::lock_guard guard(sessions_mu_);
      finished_.push_back(*session->record);
    }
    throw ServiceError(502, "backend_failure", "the system failed to respond; session ended");
  }
  session->last_activity = now();
  return view(*session, false);
}

json SessionService::get_session(const std::string& session_id, bool reveal) {
  expire_idle();
  auto session = find_session(session_id);
  std::lock_guard lock(session->mu);
  if (reveal && session->status != SessionStatus::kFinished) {
    throw ServiceError(409, "invalid_state", "reveal is only available after the session ends");
  }
  return view(*session, reveal);
}

std::size_t SessionService::expire_idle() {
  std::vector<std::shared_ptr<Session>> candidates;
  const auto t = now();
  {
    std::lock_guard lock(sessions_mu_);
    for (const auto& [_, s] : sessions_) {
      if (s->status == SessionStatus::kAwaitingHuman) candidates.push_back(s);
    }
  }
  std::size_t expired = 0;
  for (const auto& s : candidates) {
    std::unique_lock lock(s->mu, std::try_to_lock);
    if (!lock.owns_lock()) continue;
    if (s->status == SessionStatus::kAwaitingHuman && t - s->last_activity > config_.idle_timeout) {
      finish_locked(*s, true);
      ++expired;
    }
  }
  return expired;
}

std::vector<EpisodeRecord> SessionService::finished_records() const {
  std::lock_guard lock(sessions_mu_);
  return finished_;
}

// ---------------------------------------------------------------------------
// Annotation

void SessionService::add_tasks(std::vector<AnnotationTask> tasks) {
  std::lock_guard lock(tasks_mu_);
  for (auto& t : tasks) {
    if (!scenarios_.count(t.scenario_id)) {
      throw Error(ErrorKind::kReferential, "task " + t.task_id + ": unknown scenario " +
                                               t.scenario_id);
    }
    if (t.baseline.complete_turns() < 1 || t.treatment.complete_turns() < 1) {
      throw Error(ErrorKind::kValidation, "task " + t.task_id + ": both dialogues must be complete");
    }
    if (!task_index_.emplace(t.task_id, tasks_.size()).second) {
      throw Error(ErrorKind::kDuplicateId, "duplicate task id " + t.task_id);
    }
    tasks_.push_back(std::move(t));
  }
}

json SessionService::next_annotation(const std::string& rater) {
  if (trim(rater).empty()) throw ServiceError(400, "validation", "rater id is required");
  std::lock_guard lock(tasks_mu_);
  std::size_t remaining = 0;
  const AnnotationTask* chosen = nullptr;
  for (const auto& t : tasks_) {
    auto it = assignments_.find({t.task_id, rater});
    if (it != assignments_.end() && it->second.outcome) continue;
    ++remaining;
    if (!chosen) chosen = &t;
  }
  if (!chosen) return {{"done", true}, {"remaining", 0}};

  auto [it, fresh] = assignments_.try_emplace({chosen->task_id, rater});
  if (fresh) {
    std::mt19937_64 rng(config_.seed ^ fnv1a64(chosen->task_id + "\n" + rater));
    it->second.order = (rng() & 1U) ? DisplayOrder::kTreatmentFirst : DisplayOrder::kBaselineFirst;
  }
  const bool tf = it->second.order == DisplayOrder::kTreatmentFirst;
  const Scenario& s = scenarios_.at(chosen->scenario_id);
  return {{"done", false},
          {"remaining", remaining},
          {"task_id", chosen->task_id},
          {"context",
           {{"background", s.background},
            {"preventive", s.preventive},
            {"generative", s.generative}}},
          {"dialogue_1", messages_json(tf ? chosen->treatment : chosen->baseline)},
          {"dialogue_2", messages_json(tf ? chosen->baseline : chosen->treatment)},
          {"options", {"Dialogue 1", "Dialogue 2", "Tie"}}};
}

json SessionService::submit_verdict(const std::string& task_id, const std::string& rater,
                                    const std::string& verdict) {
  if (trim(rater).empty()) throw ServiceError(400, "validation", "rater id is required");
  const auto displayed = parse_displayed_verdict(verdict);
  if (!displayed) {
    throw ServiceError(400, "validation",
                       "verdict must be dialogue1, dialogue2 or tie (or better, comparable, worse)");
  }
  std::lock_guard lock(tasks_mu_);
  if (!task_index_.count(task_id)) throw ServiceError(404, "not_found", "unknown task " + task_id);
  auto it = assignments_.find({task_id, rater});
  if (it == assignments_.end()) {
    throw ServiceError(404, "not_found", "task " + task_id + " was not served to this rater");
  }
  if (it->second.outcome) {
    throw ServiceError(409, "duplicate_verdict", "this rater already judged task " + task_id);
  }
  it->second.outcome = derandomize(it->second.order, *displayed);
  AbJudgment j{task_id, "human:" + rater, *it->second.outcome, it->second.order};
  judgments_.push_back(j);
  if (config_.data_dir) {
    std::filesystem::create_directories(*config_.data_dir);
    std::ofstream out(*config_.data_dir / "judgments.jsonl", std::ios::app);
    if (!out) throw Error(ErrorKind::kIo, "cannot append judgment");
    out << json(j).dump() << '\n';
  }
  return {{"task_id", task_id}, {"recorded", true}};
}

std::vector<AbJudgment> SessionService::judgments() const {
  std::lock_guard lock(tasks_mu_);
  return judgments_;
}

json SessionService::agreement() const {
  std::lock_guard lock(tasks_mu_);
  std::map<std::string, std::pair<std::vector<AbOutcome>, std::vector<AbOutcome>>> by_rater;
  for (const auto& j : judgments_) {
    const AnnotationTask& t = tasks_[task_index_.at(j.item_id)];
    if (!t.llm_outcome) continue;
    auto& [llm, human] = by_rater[j.rater];
    llm.push_back(*t.llm_outcome);
    human.push_back(j.outcome);
  }
  json subsets = json::array();
  std::vector<std::pair<std::vector<AbOutcome>, std::vector<AbOutcome>>> pairs;
  for (const auto& [rater, seqs] : by_rater) {
    const KappaResult k = weighted_kappa(seqs.first, seqs.second);
    subsets.push_back({{"rater", rater},
                       {"n", seqs.first.size()},
                       {"kappa", k.kappa},
                       {"degenerate", k.degenerate}});
    pairs.push_back(seqs);
  }
  json out{{"subsets", std::move(subsets)}};
  out["mean_kappa"] = pairs.empty() ? json(nullptr) : json(agreement_report(pairs).mean_kappa);
  return out;
}

}  // namespace persuade

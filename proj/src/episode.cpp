#include "persuade/episode.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <random>

#include "persuade/hashing.hpp"
#include "persuade/parsers.hpp"
#include "persuade/prompts.hpp"

namespace persuade {

namespace {

// Sentence budgets requested by the persuader and persuadee templates.
constexpr int kFirstPersuaderSentences = 2;
constexpr int kLaterPersuaderSentences = 3;
constexpr int kPersuadeeSentences = 2;

std::string mental_json(const MentalState& state) { return format_mental_state(state); }

/// Label drawn for no-KB bookkeeping; the same (seed, scenario) always
/// yields the same label.
std::optional<std::string> draw_credit(const KnowledgeBase& kb, const Scenario& scenario,
                                       std::uint64_t seed) {
  if (kb.strategies().empty()) return std::nullopt;
  std::mt19937_64 rng(seed ^ fnv1a64(scenario.id));
  const auto pick = rng() % kb.strategies().size();
  auto it = kb.strategies().begin();
  std::advance(it, static_cast<std::ptrdiff_t>(pick));
  return it->first;
}

json optional_string(const std::optional<std::string>& value) {
  return value ? json(*value) : json(nullptr);
}

std::optional<std::string> read_optional_string(const json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return doc[key].get<std::string>();
}

}  // namespace

std::string_view kb_mode_name(KbMode mode) {
  return mode == KbMode::kFull ? "full" : "no_kb";
}

std::string_view persuadee_source_name(PersuadeeSource source) {
  return source == PersuadeeSource::kSimulated ? "simulated" : "external";
}

void EpisodeConfig::validate() const {
  if (t_max < 1) throw Error(ErrorKind::kConfig, "t_max must be at least 1");
  if (structured_attempts < 1 || utterance_attempts < 1) {
    throw Error(ErrorKind::kConfig, "attempt limits must be at least 1");
  }
  if (model_id.empty()) throw Error(ErrorKind::kConfig, "model id must not be empty");
}

// ---------------------------------------------------------------------------
// Stage 1

EvaluationRules build_rules(const std::optional<MetaStrategy>& meta, const Scenario& scenario) {
  EvaluationRules rules;
  rules.success_criteria = {
      "The persuadee expresses approval of or agreement with the goal: " + scenario.goal,
      "The persuadee expresses a desire to learn more or to move forward with the goal: " +
          scenario.goal,
  };
  std::string rubric = "Evaluation rules:\n";
  for (std::size_t i = 0; i < rules.success_criteria.size(); ++i) {
    rubric += fmt::format("- Criterion {}: {}\n", i + 1, rules.success_criteria[i]);
  }
  rubric += "Either criterion is sufficient.";
  if (meta) {
    rules.meta_strategy_name = meta->name;
    rubric += "\nThe persuader was directed to follow the " + meta->name +
              " principle; judge the persuadee's responses against the criteria above.";
  }
  rules.rubric_text = std::move(rubric);
  return rules;
}

Stage1Result run_stage1(const KnowledgeBase& kb, const Scenario& scenario,
                        const EpisodeConfig& config) {
  Stage1Result result;
  if (config.kb_mode == KbMode::kFull) {
    result.meta = kb.select(scenario);
  } else if (config.attribution_seed) {
    result.credit = draw_credit(kb, scenario, *config.attribution_seed);
  }
  result.rules = build_rules(result.meta, scenario);
  return result;
}

// ---------------------------------------------------------------------------
// Judge

std::string judge_prompt(const Transcript& transcript, const EvaluationRules& rules,
                         const Scenario& scenario) {
  std::string prompt = render(TemplateId::kJudgeSuccess, {{"conversation", format_dialogue(transcript)},
                                                         {"goal", scenario.goal}});
  return prompt + "\n\n" + rules.rubric_text;
}

bool judge_accept(ChatBackend& backend, const Transcript& transcript,
                  const EvaluationRules& rules, const Scenario& scenario,
                  const EpisodeConfig& config, int turn_index) {
  if (transcript.complete_turns() < 1) {
    throw Error(ErrorKind::kPrecondition, "judge needs at least one complete turn");
  }
  ChatRequest req;
  req.role = AgentRole::kJudge;
  req.prompt = judge_prompt(transcript, rules, scenario);
  req.model_id = config.model_id;
  req.temperature = default_temperature(AgentRole::kJudge);
  req.max_output = 16;
  req.episode_id = scenario.id;
  req.turn_index = turn_index;
  return complete_parsed(backend, req, parse_bool_judgment, config.structured_attempts);
}

// ---------------------------------------------------------------------------
// Runner

EpisodeRunner::EpisodeRunner(const KnowledgeBase& kb, Scenario scenario, EpisodeConfig config,
                             ChatBackend& backend)
    : kb_(kb), scenario_(std::move(scenario)), config_(std::move(config)), backend_(backend) {
  config_.validate();
}

void EpisodeRunner::configure() {
  if (configured_) throw Error(ErrorKind::kState, "episode already configured");
  stage1_ = run_stage1(kb_, scenario_, config_);
  configured_ = true;
  trace_.push_back("stage1 select=" + (stage1_.meta ? stage1_.meta->name : std::string("none")));
  if (stage1_.credit) trace_.push_back("stage1 credit=" + *stage1_.credit);
  trace_.push_back(fmt::format("stage1 rules criteria={} meta={}",
                               stage1_.rules.success_criteria.size(),
                               stage1_.rules.meta_strategy_name.value_or("none")));
}

ChatRequest EpisodeRunner::request(AgentRole role, std::string prompt, int turn) const {
  ChatRequest req;
  req.role = role;
  req.prompt = std::move(prompt);
  req.model_id = config_.model_id;
  req.temperature = default_temperature(role);
  req.episode_id = scenario_.id;
  req.turn_index = turn;
  return req;
}

MentalStateEstimate EpisodeRunner::perceive(int turn) {
  const std::string prompt = render(TemplateId::kPerception,
                                    {{"background", scenario_.background},
                                     {"goal", scenario_.goal},
                                     {"dialogue", format_dialogue(memory_.transcript)}});
  return complete_parsed(
      backend_, request(AgentRole::kPerception, prompt, turn),
      [turn](std::string_view raw) { return parse_mental_estimate(raw, turn); },
      config_.structured_attempts);
}

StrategySet EpisodeRunner::plan(int turn, const MentalStateEstimate* estimate) {
  std::string prompt;
  if (turn == 1) {
    prompt = render(TemplateId::kWmFirst,
                    {{"background", scenario_.background}, {"goal", scenario_.goal}});
  } else {
    const MentalStateEstimate none;
    const MentalStateEstimate& p = estimate ? *estimate : none;
    prompt = render(TemplateId::kWmMulti,
                    {{"dialogue", format_dialogue(memory_.transcript)},
                     {"background", scenario_.background},
                     {"goal", scenario_.goal},
                     {"preventive", " " + mental_json(p.preventive_guess)},
                     {"generative", " " + mental_json(p.generative_guess)},
                     {"high_level_strategy",
                      stage1_.meta ? stage1_.meta->name : std::string(kNone)}});
  }
  return complete_parsed(
      backend_, request(AgentRole::kWorldModel, prompt, turn),
      [turn](std::string_view raw) { return parse_strategy_set(raw, turn); },
      config_.structured_attempts);
}

Utterance EpisodeRunner::speak(int turn, const StrategySet& strategies,
                               const MentalStateEstimate* estimate) {
  std::string prompt;
  if (turn == 1) {
    std::string domains = scenario_.domain;
    for (const auto& d : scenario_.extra_domains) domains += ", " + d;
    prompt = render(TemplateId::kPersuaderFirst,
                    {{"background", scenario_.background},
                     {"goal", scenario_.goal},
                     {"domains", domains},
                     {"strategies", ": " + format_strategy_set(strategies)}});
  } else {
    const MentalStateEstimate none;
    const MentalStateEstimate& p = estimate ? *estimate : none;
    prompt = render(TemplateId::kPersuaderMulti,
                    {{"dialogue", format_dialogue(memory_.transcript)},
                     {"background", scenario_.background},
                     {"goal", scenario_.goal},
                     {"strategies", format_strategy_set(strategies)},
                     {"preventive", " " + mental_json(p.preventive_guess)},
                     {"generative", " " + mental_json(p.generative_guess)}});
  }
  Utterance u = complete_parsed(
      backend_, request(AgentRole::kPersuader, prompt, turn),
      [turn](std::string_view raw) { return parse_utterance(raw, Speaker::kPersuader, turn); },
      config_.utterance_attempts);
  const int limit = turn == 1 ? kFirstPersuaderSentences : kLaterPersuaderSentences;
  if (count_sentences(u.text) > limit) {
    ++sentence_violations_;
    spdlog::debug("{} t{}: persuader used more than {} sentences", scenario_.id, turn, limit);
  }
  return u;
}

const Utterance& EpisodeRunner::system_turn() {
  if (!configured_) throw Error(ErrorKind::kState, "episode not configured");
  if (finished()) throw Error(ErrorKind::kState, "episode already finished");
  if (memory_.transcript.awaiting_reply()) {
    throw Error(ErrorKind::kState, "previous turn is still awaiting a reply");
  }
  const int t = memory_.transcript.persuader_turns() + 1;

  const MentalStateEstimate* estimate = nullptr;
  if (t >= 2) {
    memory_.estimates.push_back(perceive(t));
    estimate = &memory_.estimates.back();
    trace_.push_back(fmt::format("t{} perception", t));
  } else {
    trace_.push_back(fmt::format("t{} perception skip", t));
  }

  trace_.push_back(fmt::format("t{} memory history={} estimate={} prior_sets={}", t,
                               memory_.transcript.size(), estimate ? "fresh" : "none",
                               memory_.prior_strategies.size()));
  if (observer_) observer_(t, memory_);

  StrategySet w = plan(t, estimate);
  trace_.push_back(fmt::format("t{} world_model template={} items={}", t,
                               t == 1 ? "wm_first" : "wm_multi", w.items.size()));

  Utterance u = speak(t, w, estimate);
  memory_.prior_strategies.push_back(std::move(w));
  memory_.transcript.append(std::move(u));
  trace_.push_back(fmt::format("t{} persuader", t));
  return memory_.transcript.utterances().back();
}

const Utterance& EpisodeRunner::simulated_reply() {
  if (!memory_.transcript.awaiting_reply()) {
    throw Error(ErrorKind::kState, "no persuader utterance awaiting a reply");
  }
  const int t = memory_.transcript.persuader_turns();
  const bool end_flag = t == config_.t_max;
  const std::string prompt =
      render(TemplateId::kPersuadee,
             {{"dialogue", ":\n" + format_dialogue(memory_.transcript)},
              {"background", ": " + scenario_.background},
              {"preventive", ": " + mental_json(scenario_.preventive)},
              {"generative", ": " + mental_json(scenario_.generative)},
              {"end_flag", end_flag ? std::string(": true") : std::string(": false")}});
  Utterance reply = complete_parsed(
      backend_, request(AgentRole::kPersuadee, prompt, t),
      [t](std::string_view raw) { return parse_utterance(raw, Speaker::kPersuadee, t); },
      config_.utterance_attempts);
  if (count_sentences(reply.text) > kPersuadeeSentences) ++sentence_violations_;
  memory_.transcript.append(std::move(reply));
  trace_.push_back(fmt::format("t{} persuadee end_flag={}", t, end_flag));
  return memory_.transcript.utterances().back();
}

const Utterance& EpisodeRunner::external_reply(std::string text) {
  if (!memory_.transcript.awaiting_reply()) {
    throw Error(ErrorKind::kState, "no persuader utterance awaiting a reply");
  }
  const int t = memory_.transcript.persuader_turns();
  memory_.transcript.append(Utterance{Speaker::kPersuadee, t, std::move(text)});
  trace_.push_back(fmt::format("t{} persuadee external", t));
  return memory_.transcript.utterances().back();
}

void EpisodeRunner::run_turn(int t) {
  if (t > config_.t_max) {
    throw Error(ErrorKind::kPrecondition, fmt::format("turn {} exceeds t_max {}", t, config_.t_max));
  }
  if (t != memory_.transcript.complete_turns() + 1 || memory_.transcript.awaiting_reply()) {
    throw Error(ErrorKind::kPrecondition, fmt::format("turn {} out of order", t));
  }
  system_turn();
  simulated_reply();
}

bool EpisodeRunner::judge_turn() {
  const int t = memory_.transcript.complete_turns();
  const bool accepted = judge_accept(backend_, memory_.transcript, stage1_.rules, scenario_,
                                     config_, t);
  verdicts_.push_back(accepted);
  trace_.push_back(fmt::format("t{} judge accept={}", t, accepted));
  if (accepted && !success_turn_) success_turn_ = t;
  return accepted;
}

bool EpisodeRunner::finished() const {
  return success_turn_.has_value() ||
         (memory_.transcript.complete_turns() >= config_.t_max &&
          !memory_.transcript.awaiting_reply());
}

EpisodeRecord EpisodeRunner::base_record() const {
  EpisodeRecord r;
  r.scenario_id = scenario_.id;
  r.domain = scenario_.domain;
  r.t_max = config_.t_max;
  r.kb_mode = config_.kb_mode;
  r.persuadee_source = config_.persuadee_source;
  if (stage1_.meta) r.selected_meta_strategy = stage1_.meta->name;
  r.credited_meta_strategy = stage1_.meta ? r.selected_meta_strategy : stage1_.credit;
  r.evaluation_rules = stage1_.rules;
  r.transcript = memory_.transcript;
  r.estimates = memory_.estimates;
  r.strategy_sets = memory_.prior_strategies;
  r.judge_verdicts = verdicts_;
  r.backend_calls = backend_.calls();
  r.usage = backend_.usage();
  r.sentence_limit_violations = sentence_violations_;
  r.outcome.selected_meta_strategy = r.selected_meta_strategy;
  return r;
}

EpisodeRecord EpisodeRunner::finish() {
  if (!configured_) throw Error(ErrorKind::kState, "episode not configured");
  if (memory_.transcript.awaiting_reply()) {
    throw Error(ErrorKind::kState, "cannot evaluate while a reply is pending");
  }
  // Stage 3. A per-turn verdict over the final history is the same judge call
  // with the same evidence, so it is reused instead of issued again.
  bool r = false;
  if (success_turn_) {
    r = true;
    trace_.push_back("stage3 R=1 source=per_turn");
  } else if (!verdicts_.empty() && static_cast<int>(verdicts_.size()) ==
                                       memory_.transcript.complete_turns()) {
    r = verdicts_.back();
    trace_.push_back(fmt::format("stage3 R={} source=per_turn", r ? 1 : 0));
  } else if (memory_.transcript.complete_turns() > 0) {
    const int t = memory_.transcript.complete_turns();
    r = judge_accept(backend_, memory_.transcript, stage1_.rules, scenario_, config_, t);
    if (r) success_turn_ = t;
    trace_.push_back(fmt::format("stage3 R={} source=final", r ? 1 : 0));
  } else {
    trace_.push_back("stage3 R=0 source=empty");
  }

  EpisodeRecord rec = base_record();
  rec.outcome.success = r;
  rec.outcome.success_turn = r ? success_turn_ : std::nullopt;
  rec.outcome.turns_used = r && success_turn_ ? *success_turn_ : config_.t_max;

  if (r && config_.write_back && rec.credited_meta_strategy) {
    rec.kb_increment = CaseKey{*rec.credited_meta_strategy, scenario_.domain};
    trace_.push_back("kb increment " + *rec.credited_meta_strategy + "/" + scenario_.domain);
  } else {
    trace_.push_back("kb unchanged");
  }
  rec.trace = trace_;
  return rec;
}

EpisodeRecord EpisodeRunner::abort(const std::string& reason) {
  trace_.push_back("abort " + reason);
  EpisodeRecord rec = base_record();
  rec.outcome.success = false;
  rec.outcome.turns_used = memory_.transcript.complete_turns();
  rec.infrastructure_failure = reason;
  rec.trace = trace_;
  return rec;
}

EpisodeResult run_episode(const KnowledgeBase& kb, const Scenario& scenario,
                          const EpisodeConfig& config, ChatBackend& backend,
                          MemoryObserver observer) {
  if (config.persuadee_source != PersuadeeSource::kSimulated) {
    throw Error(ErrorKind::kPrecondition, "batch episodes need a simulated persuadee");
  }
  EpisodeRunner runner(kb, scenario, config, backend);
  runner.set_memory_observer(std::move(observer));
  EpisodeRecord record;
  try {
    runner.configure();
    for (int t = 1; t <= config.t_max; ++t) {
      runner.run_turn(t);
      if (config.per_turn_judging && runner.judge_turn()) break;
    }
    record = runner.finish();
  } catch (const GatewayError& e) {
    spdlog::warn("episode {} aborted: {}", scenario.id, e.what());
    record = runner.abort(std::string(error_kind_name(e.kind())) + ": " + e.what());
  } catch (const ParseFailure& e) {
    spdlog::warn("episode {} aborted: {}", scenario.id, e.what());
    record = runner.abort(std::string(error_kind_name(e.kind())) + ": " + e.what());
  }
  KnowledgeBase next = kb;
  if (record.kb_increment) {
    next.record_success(record.kb_increment->strategy, record.kb_increment->domain);
  }
  return {std::move(record), std::move(next)};
}

// ---------------------------------------------------------------------------
// Records

json record_to_json(const EpisodeRecord& r) {
  // Events in execution order: estimate and strategy set precede the
  // persuader utterance of their turn; the verdict follows the reply.
  json events = json::array();
  const auto& utt = r.transcript.utterances();
  for (const auto& u : utt) {
    if (u.speaker == Speaker::kPersuader) {
      for (const auto& e : r.estimates) {
        if (e.turn_index == u.turn_index) events.push_back({{"type", "estimate"}, {"data", e}});
      }
      for (const auto& s : r.strategy_sets) {
        if (s.turn_index == u.turn_index) {
          events.push_back({{"type", "strategy_set"}, {"data", s}});
        }
      }
      events.push_back({{"type", "utterance"}, {"data", u}});
    } else {
      events.push_back({{"type", "utterance"}, {"data", u}});
      const auto idx = static_cast<std::size_t>(u.turn_index - 1);
      if (idx < r.judge_verdicts.size()) {
        events.push_back(
            {{"type", "judge"}, {"data", {{"turn", u.turn_index}, {"accept", r.judge_verdicts[idx]}}}});
      }
    }
  }
  // An aborted turn can leave a set or estimate without an utterance.
  const int spoken = r.transcript.persuader_turns();
  for (const auto& e : r.estimates) {
    if (e.turn_index > spoken) events.push_back({{"type", "estimate"}, {"data", e}});
  }
  for (const auto& s : r.strategy_sets) {
    if (s.turn_index > spoken) events.push_back({{"type", "strategy_set"}, {"data", s}});
  }

  json doc{{"scenario_id", r.scenario_id},
           {"domain", r.domain},
           {"t_max", r.t_max},
           {"kb_mode", kb_mode_name(r.kb_mode)},
           {"persuadee_source", persuadee_source_name(r.persuadee_source)},
           {"selected_meta_strategy", optional_string(r.selected_meta_strategy)},
           {"credited_meta_strategy", optional_string(r.credited_meta_strategy)},
           {"evaluation_rules", r.evaluation_rules},
           {"events", std::move(events)},
           {"outcome", r.outcome},
           {"usage",
            {{"calls", r.backend_calls},
             {"prompt_tokens", r.usage.prompt_tokens},
             {"completion_tokens", r.usage.completion_tokens}}},
           {"sentence_limit_violations", r.sentence_limit_violations},
           {"trace", r.trace},
           {"infrastructure_failure", optional_string(r.infrastructure_failure)}};
  doc["kb_increment"] =
      r.kb_increment ? json{{"strategy", r.kb_increment->strategy}, {"domain", r.kb_increment->domain}}
                     : json(nullptr);
  return doc;
}

EpisodeRecord record_from_json(const json& doc) {
  try {
    EpisodeRecord r;
    r.scenario_id = doc.at("scenario_id").get<std::string>();
    r.domain = doc.value("domain", "");
    r.t_max = doc.value("t_max", 4);
    r.kb_mode = doc.value("kb_mode", "full") == "no_kb" ? KbMode::kNoKb : KbMode::kFull;
    r.persuadee_source = doc.value("persuadee_source", "simulated") == "external"
                             ? PersuadeeSource::kExternal
                             : PersuadeeSource::kSimulated;
    r.selected_meta_strategy = read_optional_string(doc, "selected_meta_strategy");
    r.credited_meta_strategy = read_optional_string(doc, "credited_meta_strategy");
    r.evaluation_rules = doc.at("evaluation_rules").get<EvaluationRules>();
    for (const auto& ev : doc.at("events")) {
      const std::string type = ev.at("type").get<std::string>();
      const json& data = ev.at("data");
      if (type == "estimate") {
        r.estimates.push_back(data.get<MentalStateEstimate>());
      } else if (type == "strategy_set") {
        r.strategy_sets.push_back(data.get<StrategySet>());
      } else if (type == "utterance") {
        r.transcript.append(data.get<Utterance>());
      } else if (type == "judge") {
        r.judge_verdicts.push_back(data.at("accept").get<bool>());
      } else {
        throw Error(ErrorKind::kSchema, "events: unknown event type '" + type + "'");
      }
    }
    r.outcome = doc.at("outcome").get<EpisodeOutcome>();
    if (doc.contains("usage")) {
      const json& u = doc["usage"];
      r.backend_calls = u.value("calls", std::size_t{0});
      r.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    }
    r.sentence_limit_violations = doc.value("sentence_limit_violations", 0);
    if (doc.contains("trace")) r.trace = doc["trace"].get<std::vector<std::string>>();
    r.infrastructure_failure = read_optional_string(doc, "infrastructure_failure");
    if (doc.contains("kb_increment") && !doc["kb_increment"].is_null()) {
      r.kb_increment = CaseKey{doc["kb_increment"].at("strategy").get<std::string>(),
                               doc["kb_increment"].at("domain").get<std::string>()};
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("episode record: ") + e.what());
  }
}

std::vector<std::string> check_record_invariants(const EpisodeRecord& r) {
  std::vector<std::string> problems;
  auto fail = [&](std::string msg) { problems.push_back(std::move(msg)); };

  const int spoken = r.transcript.persuader_turns();
  const int complete = r.transcript.complete_turns();
  if (r.t_max < 1) fail("t_max below 1");
  if (spoken > r.t_max) fail(fmt::format("{} persuader turns exceed t_max {}", spoken, r.t_max));

  if (!r.aborted()) {
    if (spoken < 1) fail("no persuader turn");
    if (r.transcript.awaiting_reply()) fail("last persuader utterance has no reply");
    if (static_cast<int>(r.strategy_sets.size()) != spoken) {
      fail(fmt::format("{} strategy sets for {} persuader turns", r.strategy_sets.size(), spoken));
    }
  }
  for (std::size_t i = 0; i < r.strategy_sets.size(); ++i) {
    if (r.strategy_sets[i].turn_index != static_cast<int>(i) + 1) {
      fail(fmt::format("strategy set {} has turn {}", i, r.strategy_sets[i].turn_index));
    }
    try {
      check_strategy_set(r.strategy_sets[i]);
    } catch (const Error& e) {
      fail(fmt::format("strategy set {}: {}", i, e.what()));
    }
  }
  for (const auto& e : r.estimates) {
    if (e.turn_index < 2 || e.turn_index > r.t_max) {
      fail(fmt::format("estimate at turn {}", e.turn_index));
    }
  }
  const auto& o = r.outcome;
  if (o.success != o.success_turn.has_value()) fail("success flag disagrees with success_turn");
  if (o.success_turn) {
    if (*o.success_turn < 1 || *o.success_turn > r.t_max) fail("success_turn out of range");
    if (o.turns_used != *o.success_turn) fail("turns_used differs from success_turn");
    if (!r.aborted() && complete != *o.success_turn) {
      fail(fmt::format("success at turn {} but {} turns in transcript", *o.success_turn, complete));
    }
  } else if (!r.aborted()) {
    if (o.turns_used != r.t_max) fail("failed episode must report t_max turns used");
    if (complete != r.t_max) fail(fmt::format("failed episode stopped after {} turns", complete));
  }
  if (o.selected_meta_strategy != r.selected_meta_strategy) {
    fail("outcome meta-strategy differs from the selected one");
  }
  if (r.kb_increment) {
    if (!o.success) fail("knowledge-base increment without success");
    if (r.aborted()) fail("knowledge-base increment on an aborted episode");
    if (r.kb_increment->domain != r.domain) fail("increment domain differs from episode domain");
  }
  if (r.kb_mode == KbMode::kNoKb && r.selected_meta_strategy) {
    fail("no-KB episode has a selected meta-strategy");
  }
  return problems;
}

}  // namespace persuade

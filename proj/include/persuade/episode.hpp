#pragma once

// One persuasion episode: meta-strategy selection and rule construction,
// the multi-turn perception / world model / persuader / persuadee loop with
// per-turn judging, then final evaluation and the knowledge-base credit.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "persuade/domain.hpp"
#include "persuade/gateway.hpp"
#include "persuade/knowledge_base.hpp"

namespace persuade {

enum class KbMode { kFull, kNoKb };
enum class PersuadeeSource { kSimulated, kExternal };

std::string_view kb_mode_name(KbMode mode);
std::string_view persuadee_source_name(PersuadeeSource source);

struct EpisodeConfig {
  int t_max = 4;
  KbMode kb_mode = KbMode::kFull;
  PersuadeeSource persuadee_source = PersuadeeSource::kSimulated;
  bool per_turn_judging = true;
  /// Credit a judged success to the knowledge base.
  bool write_back = false;
  /// In no-KB mode, draw a bookkeeping meta-strategy per episode from this
  /// seed so that successes can still be credited. The world model never
  /// sees it.
  std::optional<std::uint64_t> attribution_seed;
  std::string model_id = "default";
  int structured_attempts = 3;
  int utterance_attempts = 1;

  /// Throws Error(kConfig) on out-of-range values.
  void validate() const;
};

struct EpisodeRecord {
  std::string scenario_id;
  std::string domain;
  int t_max = 4;
  KbMode kb_mode = KbMode::kFull;
  PersuadeeSource persuadee_source = PersuadeeSource::kSimulated;
  std::optional<std::string> selected_meta_strategy;
  std::optional<std::string> credited_meta_strategy;
  EvaluationRules evaluation_rules;
  Transcript transcript;
  std::vector<MentalStateEstimate> estimates;
  std::vector<StrategySet> strategy_sets;
  /// Per-turn judge verdicts, in turn order.
  std::vector<bool> judge_verdicts;
  EpisodeOutcome outcome;
  std::optional<CaseKey> kb_increment;
  std::size_t backend_calls = 0;
  Usage usage;
  int sentence_limit_violations = 0;
  /// Ordered stage log; one line per step.
  std::vector<std::string> trace;
  /// Set when a gateway or parse failure aborted the episode.
  std::optional<std::string> infrastructure_failure;

  bool aborted() const noexcept { return infrastructure_failure.has_value(); }
};

json record_to_json(const EpisodeRecord& record);
EpisodeRecord record_from_json(const json& doc);

/// Invariant violations of a finished record; empty when consistent.
std::vector<std::string> check_record_invariants(const EpisodeRecord& record);

/// Success criteria from the goal, plus a meta-strategy note when one is set.
EvaluationRules build_rules(const std::optional<MetaStrategy>& meta, const Scenario& scenario);

struct Stage1Result {
  std::optional<MetaStrategy> meta;
  EvaluationRules rules;
  /// Bookkeeping label for no-KB seed runs.
  std::optional<std::string> credit;
};

Stage1Result run_stage1(const KnowledgeBase& kb, const Scenario& scenario,
                        const EpisodeConfig& config);

/// Per-turn success judge over the history so far. Throws
/// Error(kPrecondition) when no turn is complete.
bool judge_accept(ChatBackend& backend, const Transcript& transcript,
                  const EvaluationRules& rules, const Scenario& scenario,
                  const EpisodeConfig& config, int turn_index);

/// Judge prompt: the success template followed by the rubric.
std::string judge_prompt(const Transcript& transcript, const EvaluationRules& rules,
                         const Scenario& scenario);

/// Called when the world model is about to run at `turn`, with the memory
/// snapshot it receives.
using MemoryObserver = std::function<void(int turn, const ShortTermMemory& memory)>;

/// Step-wise episode state. run_episode drives it with a simulated
/// persuadee; the session service drives it with human replies.
class EpisodeRunner {
 public:
  EpisodeRunner(const KnowledgeBase& kb, Scenario scenario, EpisodeConfig config,
                ChatBackend& backend);

  void set_memory_observer(MemoryObserver observer) { observer_ = std::move(observer); }

  /// Stage 1. Must be called once before the first turn.
  void configure();

  /// Perception (from turn 2), memory snapshot, world model, persuader.
  /// Returns the persuader utterance of the new turn.
  const Utterance& system_turn();
  /// Simulated persuadee reply to the pending persuader utterance.
  const Utterance& simulated_reply();
  /// Human reply to the pending persuader utterance.
  const Utterance& external_reply(std::string text);
  /// All of the above for turn `t` with a simulated persuadee.
  void run_turn(int t);

  /// Per-turn judge; records the success turn on acceptance.
  bool judge_turn();

  /// Accepted, or every allowed turn used.
  bool finished() const;
  int turns_completed() const { return memory_.transcript.complete_turns(); }
  const ShortTermMemory& memory() const noexcept { return memory_; }
  const Scenario& scenario() const noexcept { return scenario_; }
  const std::optional<MetaStrategy>& meta() const noexcept { return stage1_.meta; }

  /// Stage 3: final evaluation and the write-back decision.
  EpisodeRecord finish();
  /// Record of an episode cut short by an infrastructure failure.
  EpisodeRecord abort(const std::string& reason);

 private:
  MentalStateEstimate perceive(int turn);
  StrategySet plan(int turn, const MentalStateEstimate* estimate);
  Utterance speak(int turn, const StrategySet& strategies, const MentalStateEstimate* estimate);
  ChatRequest request(AgentRole role, std::string prompt, int turn) const;
  EpisodeRecord base_record() const;

  const KnowledgeBase& kb_;
  Scenario scenario_;
  EpisodeConfig config_;
  MeteredBackend backend_;
  MemoryObserver observer_;

  bool configured_ = false;
  Stage1Result stage1_;
  ShortTermMemory memory_;
  std::vector<bool> verdicts_;
  std::optional<int> success_turn_;
  int sentence_violations_ = 0;
  std::vector<std::string> trace_;
};

struct EpisodeResult {
  EpisodeRecord record;
  KnowledgeBase kb;
};

/// Runs every turn up to t_max, stopping at the first accepted turn, then
/// evaluates and (when enabled) credits the knowledge base. Gateway and
/// parse failures yield an aborted record and an unchanged knowledge base.
EpisodeResult run_episode(const KnowledgeBase& kb, const Scenario& scenario,
                          const EpisodeConfig& config, ChatBackend& backend,
                          MemoryObserver observer = {});

}  // namespace persuade

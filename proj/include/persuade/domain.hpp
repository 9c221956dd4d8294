#pragma once

// Value types shared by every stage of a persuasion episode.

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persuade {

using nlohmann::json;

/// Sentinel for a mental-state facet with no information.
inline constexpr std::string_view kNone = "none";

struct MentalState {
  std::string content{kNone};
  std::string belief{kNone};
  std::string desire{kNone};

  bool operator==(const MentalState&) const = default;
};

struct Scenario {
  std::string id;
  std::string tag;
  std::string background;
  std::string goal;
  std::string domain;
  /// Further domain labels of a multi-domain record; informational only.
  std::vector<std::string> extra_domains;
  std::string persuader_name;
  std::string persuadee_name;
  MentalState preventive;
  MentalState generative;

  bool operator==(const Scenario&) const = default;
};

enum class Speaker { kPersuader, kPersuadee };

std::string_view speaker_name(Speaker speaker);

struct Utterance {
  Speaker speaker = Speaker::kPersuader;
  int turn_index = 1;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

/// Dialogue history. Appends are checked: speakers alternate starting with
/// the persuader, and a persuadee reply shares the turn index of the
/// persuader utterance it answers.
class Transcript {
 public:
  void append(Utterance utterance);

  const std::vector<Utterance>& utterances() const noexcept { return utterances_; }
  bool empty() const noexcept { return utterances_.empty(); }
  std::size_t size() const noexcept { return utterances_.size(); }

  /// Number of persuader utterances.
  int persuader_turns() const noexcept;
  /// Number of persuader/persuadee pairs.
  int complete_turns() const noexcept;
  /// True when the last utterance is the persuader's (a reply is pending).
  bool awaiting_reply() const noexcept;

  bool operator==(const Transcript&) const = default;

 private:
  std::vector<Utterance> utterances_;
};

/// "persuader: ...\npersuadee: ..." lines, as shown to every agent.
std::string format_dialogue(const Transcript& transcript);

struct MentalStateEstimate {
  MentalState preventive_guess;
  MentalState generative_guess;
  int turn_index = 0;

  bool operator==(const MentalStateEstimate&) const = default;
};

struct MetaStrategy {
  std::string name;
  std::string description;

  bool operator==(const MetaStrategy&) const = default;
};

struct StrategyItem {
  std::string name;
  std::string directive;

  bool operator==(const StrategyItem&) const = default;
};

struct StrategySet {
  int turn_index = 1;
  std::vector<StrategyItem> items;

  bool operator==(const StrategySet&) const = default;
};

/// Throws Error(kValidation) unless the set has 1..4 items on turn 1,
/// exactly 5 afterwards, and unique names.
void check_strategy_set(const StrategySet& set);

/// Per-episode snapshot: history, perception estimates, and the strategy
/// sets already executed.
struct ShortTermMemory {
  Transcript transcript;
  std::vector<MentalStateEstimate> estimates;
  std::vector<StrategySet> prior_strategies;

  /// Estimate produced for `turn`, if any.
  const MentalStateEstimate* estimate_for(int turn) const;
};

struct EvaluationRules {
  std::vector<std::string> success_criteria;
  std::string rubric_text;
  std::optional<std::string> meta_strategy_name;

  bool operator==(const EvaluationRules&) const = default;
};

struct EpisodeOutcome {
  bool success = false;
  std::optional<int> success_turn;
  int turns_used = 0;
  std::optional<std::string> selected_meta_strategy;

  bool operator==(const EpisodeOutcome&) const = default;
};

// Scenario records use the corpus field names: id, tag, background,
// persuader, persuadee, goal, domain, preventive, generative.
Scenario validate_scenario(const json& raw);
/// Validates a batch and rejects duplicate ids.
std::vector<Scenario> validate_scenarios(const json& records);
json encode_scenario(const Scenario& scenario);

void to_json(json& j, const MentalState& m);
void to_json(json& j, const Utterance& u);
void from_json(const json& j, Utterance& u);
void to_json(json& j, const MentalStateEstimate& e);
void from_json(const json& j, MentalStateEstimate& e);
void to_json(json& j, const StrategySet& s);
void from_json(const json& j, StrategySet& s);
void to_json(json& j, const EvaluationRules& r);
void from_json(const json& j, EvaluationRules& r);
void to_json(json& j, const EpisodeOutcome& o);
void from_json(const json& j, EpisodeOutcome& o);

MentalState mental_state_from_json(const json& j);

}  // namespace persuade

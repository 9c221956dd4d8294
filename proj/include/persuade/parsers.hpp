#pragma once

// Parsers for the constrained outputs of each agent. Every parser returns a
// valid domain value or throws ParseError carrying the raw reply.

#include <string>
#include <string_view>

#include "persuade/domain.hpp"

namespace persuade {

struct ParseOptions {
  /// Reject replies that wrap the structured payload in prose.
  bool strict = false;
};

/// Reads the object under "strategy" in reply order and checks the per-turn
/// cardinality (1..4 on turn 1, exactly 5 later) and name uniqueness.
StrategySet parse_strategy_set(std::string_view raw, int turn_index,
                               ParseOptions options = {});

/// Reads the "preventive" and "generative" blocks. Absent or empty facets
/// become "none"; a reply with neither block is an error.
MentalStateEstimate parse_mental_estimate(std::string_view raw, int turn_index = 0,
                                          ParseOptions options = {});

/// Strips the required "persuader:" / "persuadee:" prefix.
Utterance parse_utterance(std::string_view raw, Speaker expected, int turn_index = 1);
std::string format_utterance(const Utterance& utterance);

/// Sentence count used for the length-limit telemetry.
int count_sentences(std::string_view text);

/// First standalone true/false word, case-insensitive.
bool parse_bool_judgment(std::string_view raw);

enum class ScoreDimension { kPersuasive, kLogic, kHelpful };

std::string_view score_label(ScoreDimension dimension);

/// Integer after the dimension label ("Persuasive: 7"), or a bare integer.
/// Values outside 1..10 throw ParseError with kind kOutOfRange.
int parse_score(std::string_view raw, ScoreDimension dimension);

enum class AbVerdict { kDialogue1, kDialogue2, kTie };

std::string_view ab_option_string(AbVerdict verdict);

/// Verdict named by the last ###...### block holding one of the three
/// option strings.
AbVerdict parse_ab_verdict(std::string_view raw);

/// {"strategy": {"name": "directive", ...}} in set order.
std::string format_strategy_set(const StrategySet& set);
/// {"content": ..., "belief": ..., "desire": ...}
std::string format_mental_state(const MentalState& state);

}  // namespace persuade

#include <gtest/gtest.h>

#include "persuade/domain.hpp"
#include "persuade/error.hpp"

namespace persuade {
namespace {

json emily_record() {
  return json::parse(R"({
    "id": 12,
    "tag": "retirement",
    "background": "Emily is weighing whether to move into an assisted-living community.",
    "persuader": "Daughter",
    "persuadee": "Emily",
    "goal": "Emily agrees to tour the community next week.",
    "domain": ["Family", "Health"],
    "preventive": {"content": "Fear of losing independence", "belief": "", "desire": "Stay home"},
    "generative": {"content": "Wants company", "belief": "Community life can be good"}
  })");
}

TEST(Scenario, ValidatesCorpusRecord) {
  const Scenario s = validate_scenario(emily_record());
  EXPECT_EQ(s.id, "12");
  EXPECT_EQ(s.domain, "Family");
  ASSERT_EQ(s.extra_domains.size(), 1u);
  EXPECT_EQ(s.extra_domains[0], "Health");
  EXPECT_EQ(s.persuadee_name, "Emily");
  EXPECT_EQ(s.preventive.belief, "none");
  EXPECT_EQ(s.generative.desire, "none");
}

TEST(Scenario, MissingGoalRejected) {
  json r = emily_record();
  r.erase("goal");
  try {
    validate_scenario(r);
    FAIL() << "expected validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find("goal"), std::string::npos);
  }
}

TEST(Scenario, MissingDomainRejected) {
  json r = emily_record();
  r["domain"] = json::array();
  EXPECT_THROW(validate_scenario(r), Error);
}

TEST(Scenario, DuplicateIdsRejected) {
  json batch = json::array({emily_record(), emily_record()});
  try {
    validate_scenarios(batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDuplicateId);
  }
}

TEST(Scenario, EncodeRoundTrip) {
  const Scenario s = validate_scenario(emily_record());
  EXPECT_EQ(validate_scenario(encode_scenario(s)), s);
}

TEST(Transcript, EnforcesAlternation) {
  Transcript t;
  EXPECT_THROW(t.append({Speaker::kPersuadee, 1, "hi"}), Error);
  t.append({Speaker::kPersuader, 1, "hello"});
  EXPECT_TRUE(t.awaiting_reply());
  EXPECT_THROW(t.append({Speaker::kPersuader, 2, "again"}), Error);
  EXPECT_THROW(t.append({Speaker::kPersuadee, 2, "wrong turn"}), Error);
  t.append({Speaker::kPersuadee, 1, "hi"});
  EXPECT_THROW(t.append({Speaker::kPersuader, 3, "skipped"}), Error);
  EXPECT_THROW(t.append({Speaker::kPersuader, 2, ""}), Error);
  t.append({Speaker::kPersuader, 2, "next"});
  EXPECT_EQ(t.persuader_turns(), 2);
  EXPECT_EQ(t.complete_turns(), 1);
}

TEST(Transcript, FormatsDialogueLines) {
  Transcript t;
  t.append({Speaker::kPersuader, 1, "Have you thought about it?"});
  t.append({Speaker::kPersuadee, 1, "Not really."});
  EXPECT_EQ(format_dialogue(t), "persuader: Have you thought about it?\npersuadee: Not really.");
}

TEST(StrategySet, CardinalityPerTurn) {
  StrategySet first{1, {{"A", "a"}, {"B", "b"}}};
  EXPECT_NO_THROW(check_strategy_set(first));
  StrategySet empty{1, {}};
  EXPECT_THROW(check_strategy_set(empty), Error);
  StrategySet five_first{1, {{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}, {"E", "e"}}};
  EXPECT_THROW(check_strategy_set(five_first), Error);
  StrategySet later = five_first;
  later.turn_index = 2;
  EXPECT_NO_THROW(check_strategy_set(later));
  later.items.pop_back();
  EXPECT_THROW(check_strategy_set(later), Error);
  StrategySet dup{2, {{"A", "a"}, {"A", "b"}, {"C", "c"}, {"D", "d"}, {"E", "e"}}};
  EXPECT_THROW(check_strategy_set(dup), Error);
}

TEST(Records, JsonRoundTrips) {
  StrategySet s{2, {{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}, {"E", "e"}}};
  EXPECT_EQ(json(s).get<StrategySet>(), s);
  MentalStateEstimate e{{"x", "y", "z"}, {"p", "q", "r"}, 3};
  EXPECT_EQ(json(e).get<MentalStateEstimate>(), e);
  EvaluationRules rules{{"c1", "c2"}, "rubric", "Authority"};
  EXPECT_EQ(json(rules).get<EvaluationRules>(), rules);
  EpisodeOutcome o{true, 2, 2, "Authority"};
  EXPECT_EQ(json(o).get<EpisodeOutcome>(), o);
}

}  // namespace
}  // namespace persuade

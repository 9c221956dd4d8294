#include "support.hpp"

#include <fmt/format.h>

#include <fstream>
#include <random>
#include <sstream>

#include "persuade/hashing.hpp"
#include "persuade/parsers.hpp"

namespace fs = std::filesystem;

namespace persuade::testing {

fs::path fixture_path(const std::string& relative) {
  return fs::path(PERSUADE_FIXTURE_DIR) / relative;
}

TempDir::TempDir() {
  static std::mt19937_64 rng(std::random_device{}());
  path_ = fs::temp_directory_path() / fmt::format("persuade-test-{:016x}", rng());
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Scenario make_scenario(const std::string& id, const std::string& domain) {
  Scenario s;
  s.id = id;
  s.tag = "toy";
  s.domain = domain;
  s.background = "Scenario " + id + ": a person is undecided about a small change in " + domain + ".";
  s.goal = "The person agrees to try the change for one week.";
  s.persuader_name = "Alex";
  s.persuadee_name = "Jordan";
  s.preventive = {"Worried about effort.", "Thinks it will not help.", "Wants to keep habits."};
  s.generative = {"Cares about health.", "Sees some benefit.", "Wants an easy start."};
  return s;
}

std::vector<Scenario> toy_scenarios(const std::string& prefix, int n,
                                    const std::vector<std::string>& domains) {
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(make_scenario(fmt::format("{}-{}", prefix, i), domains[i % domains.size()]));
  }
  return out;
}

void script_defaults(ScriptedBackend& b) {
  using R = AgentRole;
  const std::string any(ScriptedBackend::kAnyEpisode);
  b.add(R::kWorldModel, any, 1, 0,
        R"("strategy": {"Find common ground": "Start from a shared value.", "Ask a question": "Invite their view."})");
  b.add(R::kWorldModel, any, 0, 0,
        R"("strategy": {"Acknowledge": "Restate the worry.", "Example": "Give one example.", )"
        R"("Small step": "Propose a small step.", "Link": "Tie it to their goal.", "Ask": "Ask for a decision."})");
  b.add(R::kPerception, any, 0, 0,
        R"("preventive": {"content": "Effort", "belief": "Not urgent", "desire": "Keep routine"}, )"
        R"("generative": {"content": "Family", "belief": "Some value", "desire": "Easy start"})");
  b.add(R::kPersuader, any, 0, 0, "persuader: There is an easy way to start this week.");
  b.add(R::kPersuadee, any, 0, 0, "persuadee: I am not sure yet.");
  b.add(R::kJudge, any, 0, 0, "False");
}

void script_accept(ScriptedBackend& b, const std::string& episode, int turn) {
  b.add(AgentRole::kJudge, episode, turn, 0, "True");
}

int toy_accept_turn(const std::string& id, int t_max) {
  return static_cast<int>(fnv1a64(id) % static_cast<std::uint64_t>(t_max + 1));
}

void script_toy(ScriptedBackend& b, const std::vector<Scenario>& scenarios, int t_max) {
  script_defaults(b);
  for (const auto& s : scenarios) {
    const int t = toy_accept_turn(s.id, t_max);
    if (t > 0) script_accept(b, s.id, t);
  }
}

const std::map<std::string, std::string>& frozen_template_digests() {
  // Computed once from the reference text when the assets were extracted.
  static const std::map<std::string, std::string> digests = {
      {"wm_first", "51b07accc08b563b326ea2dc8cda0c8d6e4bb3bbfeb387c4c4d30978f8636197"},
      {"wm_multi", "f18262781789dbe176b6befbe2514739f63811f02dd2cd490d96d74aaf8ce117"},
      {"persuader_first", "0a630b7c02a3b8980cc8d4e409903e0cd670c7eee6f69dcb3e5aee5dd2e05de8"},
      {"persuader_multi", "676afd3552e8335b94b88d3b4891a750696a85b9df4abf2d133622281c9c9e0a"},
      {"perception", "c331fb8b7feedf4e4633094093cc011dd1a2607aff50ab24f11b398325c703c4"},
      {"persuadee", "ad076cff58affce4b8cf375b979d226501f2c1cbacc6fd3d0847949786aed079"},
      {"judge_success", "c21188f2474b8133e173e074225b8d3c99b7cb922821c0200de312cab892ba47"},
      {"ab_judge", "79fa7fcfc58dbf7f946f28cb1a948138c7b0e5962ccccfd1e45042d9690b6286"},
      {"score_persuasive", "345296ab5f425f9111337d4f7b9fc4150b1b89716d0206962c4173286b179dcf"},
      {"score_logic", "ce647eb08214a48efb966d5c5c58b836997239c1a786b680963730569fcf2e31"},
      {"score_helpful", "029d9f3983cae8fc09fe50a697803e1df44ccdd0625ab35116d2bd4ad7b22c4f"},
  };
  return digests;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TraceRun run_trace_fixture() {
  const Corpus corpus = load_corpus(fixture_path("trace"));
  auto backend = ScriptedBackend::load(fixture_path("trace/script.json"));
  TraceRun run;
  run.kb = load_kb(fixture_path("trace/kb.json"));
  EpisodeConfig config;
  config.write_back = true;
  for (const auto& s : corpus.select(corpus.manifest().test_ids)) {
    EpisodeResult r = run_episode(run.kb, s, config, *backend);
    run.trace += "== " + s.id + "\n";
    for (const auto& line : r.record.trace) run.trace += line + "\n";
    run.kb = std::move(r.kb);
    run.records.push_back(std::move(r.record));
  }
  return run;
}

}  // namespace persuade::testing

// ---------------------------------------------------------------------------
// Parser fuzzing

namespace persuade::testing {

namespace {

const std::vector<std::string> kFragments = {
    "{", "}", "\"", ":", ",", " ", "\n", "\\", "\"strategy\"", "\"preventive\"", "\"generative\"",
    "\"content\"", "\"belief\"", "\"desire\"", "persuader", "persuadee", "PERSUADER:", "###",
    "1. More Persuasive: Dialogue 1", "2. More Persuasive: Dialogue 2",
    "3. Equally Persuasive: Both dialogues", "Persuasive", "Logical-Coherence", "Helpfulness",
    "True", "false", "7", "-3", "10", "0", "99999999999", "null", "[", "]", "\"x\"", "\t",
    "\xc3\xa9", "\xff", std::string(1, '\0'), "**",
};

std::string random_word(std::mt19937_64& rng) {
  static const char* kWords[] = {"calm", "evidence", "family", "trust", "step", "goal",
                                 "story", "plan", "care", "time", "value", "friend"};
  return kWords[rng() % 12];
}

std::string random_phrase(std::mt19937_64& rng, int words) {
  std::string out;
  for (int i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += random_word(rng);
  }
  return out;
}

std::string random_junk(std::mt19937_64& rng) {
  std::string s;
  const int n = static_cast<int>(rng() % 24);
  for (int i = 0; i < n; ++i) {
    if (rng() % 4 == 0) {
      s.push_back(static_cast<char>(rng() % 256));
    } else {
      s += kFragments[rng() % kFragments.size()];
    }
  }
  return s;
}

StrategySet random_set(std::mt19937_64& rng, int turn) {
  StrategySet set;
  set.turn_index = turn;
  const int n = turn == 1 ? 1 + static_cast<int>(rng() % 4) : 5;
  for (int i = 0; i < n; ++i) {
    set.items.push_back({"S" + std::to_string(i) + " " + random_word(rng),
                         random_phrase(rng, 1 + static_cast<int>(rng() % 6)) + " \"quoted\" {x}"});
  }
  return set;
}

MentalState random_mental(std::mt19937_64& rng) {
  return {random_phrase(rng, 3), random_phrase(rng, 2), random_phrase(rng, 4)};
}

template <typename Fn>
void expect_parse_or_parse_error(FuzzReport& report, const std::string& input, Fn fn) {
  try {
    fn(input);
  } catch (const ParseError&) {
  } catch (const std::exception& e) {
    if (report.first_problem.empty()) report.first_problem = std::string("crash: ") + e.what();
    ++report.crashes;
  }
}

void round_trip(FuzzReport& report, bool ok, const std::string& what) {
  if (ok) return;
  if (report.first_problem.empty()) report.first_problem = "round trip: " + what;
  ++report.round_trip_failures;
}

}  // namespace

FuzzReport run_parser_fuzz(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FuzzReport report;
  for (int c = 0; c < cases; ++c) {
    ++report.cases;
    const int turn = 1 + static_cast<int>(rng() % 4);

    // Arbitrary text, and text mutated from a valid reply.
    std::string junk = random_junk(rng);
    std::string mutated = format_strategy_set(random_set(rng, turn));
    for (int m = 0; m < 3; ++m) {
      const std::size_t at = rng() % (mutated.size() + 1);
      mutated.insert(at, kFragments[rng() % kFragments.size()]);
    }
    for (const std::string& input : {junk, mutated}) {
      expect_parse_or_parse_error(report, input, [&](const std::string& s) {
        parse_strategy_set(s, turn, {rng() % 2 == 0});
      });
      expect_parse_or_parse_error(report, input,
                                  [&](const std::string& s) { parse_mental_estimate(s, turn); });
      expect_parse_or_parse_error(report, input, [&](const std::string& s) {
        parse_utterance(s, Speaker::kPersuader, turn);
      });
      expect_parse_or_parse_error(report, input,
                                  [&](const std::string& s) { parse_bool_judgment(s); });
      expect_parse_or_parse_error(report, input, [&](const std::string& s) {
        parse_score(s, static_cast<ScoreDimension>(rng() % 3));
      });
      expect_parse_or_parse_error(report, input, [&](const std::string& s) { parse_ab_verdict(s); });
    }

    // Valid values survive format -> parse, with optional surrounding prose.
    const StrategySet set = random_set(rng, turn);
    std::string text = format_strategy_set(set);
    if (rng() % 2) text = text.substr(1, text.size() - 2);  // the braceless form
    if (rng() % 2) text = "Here is the plan:\n" + text + "\nGood luck.";
    try {
      round_trip(report, parse_strategy_set(text, turn) == set, "strategy set: " + text);
    } catch (const std::exception& e) {
      round_trip(report, false, std::string("strategy set threw ") + e.what());
    }

    MentalStateEstimate est{random_mental(rng), random_mental(rng), turn};
    const std::string est_text = "\"preventive\": " + format_mental_state(est.preventive_guess) +
                                 ",\n\"generative\": " + format_mental_state(est.generative_guess);
    try {
      round_trip(report, parse_mental_estimate(est_text, turn) == est, "estimate: " + est_text);
    } catch (const std::exception& e) {
      round_trip(report, false, std::string("estimate threw ") + e.what());
    }

    const Speaker speaker = rng() % 2 ? Speaker::kPersuader : Speaker::kPersuadee;
    const Utterance u{speaker, turn, random_phrase(rng, 1 + static_cast<int>(rng() % 12)) + "."};
    try {
      round_trip(report, parse_utterance(format_utterance(u), speaker, turn) == u, "utterance");
    } catch (const std::exception& e) {
      round_trip(report, false, std::string("utterance threw ") + e.what());
    }

    const auto dim = static_cast<ScoreDimension>(rng() % 3);
    const int score = 1 + static_cast<int>(rng() % 10);
    try {
      round_trip(report,
                 parse_score(std::string(score_label(dim)) + ": " + std::to_string(score), dim) ==
                     score,
                 "score");
    } catch (const std::exception& e) {
      round_trip(report, false, std::string("score threw ") + e.what());
    }

    const auto verdict = static_cast<AbVerdict>(rng() % 3);
    try {
      const std::string reply = random_phrase(rng, 8) + "\n###" +
                                std::string(ab_option_string(verdict)) + "###";
      round_trip(report, parse_ab_verdict(reply) == verdict, "ab verdict");
    } catch (const std::exception& e) {
      round_trip(report, false, std::string("ab verdict threw ") + e.what());
    }

    const bool b = rng() % 2;
    try {
      round_trip(report, parse_bool_judgment(b ? "True" : "False") == b, "bool");
    } catch (const std::exception& e) {
      round_trip(report, false, std::string("bool threw ") + e.what());
    }
  }
  return report;
}

}  // namespace persuade::testing

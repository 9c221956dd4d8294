#pragma once

// Fixtures and script builders shared by the unit tests and the acceptance
// runner.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "persuade/corpus.hpp"
#include "persuade/episode.hpp"
#include "persuade/gateway.hpp"
#include "persuade/knowledge_base.hpp"

namespace persuade::testing {

std::filesystem::path fixture_path(const std::string& relative);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

Scenario make_scenario(const std::string& id, const std::string& domain);

/// Toy scenarios "<prefix>-<i>", domains assigned round-robin.
std::vector<Scenario> toy_scenarios(const std::string& prefix, int n,
                                    const std::vector<std::string>& domains);

/// Parseable replies for every generative role on any episode and turn; the
/// judge says False.
void script_defaults(ScriptedBackend& backend);

/// Judge accepts `episode` at `turn`.
void script_accept(ScriptedBackend& backend, const std::string& episode, int turn);

/// Acceptance turn derived from the id (0 = never accepted), so toy batches
/// have a fixed, mixed outcome pattern.
int toy_accept_turn(const std::string& id, int t_max = 4);

/// Defaults plus toy_accept_turn for each scenario.
void script_toy(ScriptedBackend& backend, const std::vector<Scenario>& scenarios, int t_max = 4);

struct TraceRun {
  std::string trace;
  KnowledgeBase kb;
  std::vector<EpisodeRecord> records;
};

/// Runs the six-scenario trace fixture in order with write-back, threading
/// the knowledge base through, and joins the per-episode traces.
TraceRun run_trace_fixture();

std::string read_text(const std::filesystem::path& path);

/// SHA-256 of each shipped template body, by template name.
const std::map<std::string, std::string>& frozen_template_digests();

struct FuzzReport {
  int cases = 0;
  /// Exceptions other than ParseError escaping a parser.
  int crashes = 0;
  /// Valid inputs that failed to parse back to the formatted value.
  int round_trip_failures = 0;
  std::string first_problem;
};

/// Random and mutated inputs through every parser, plus format/parse round
/// trips on generated valid values.
FuzzReport run_parser_fuzz(int cases, std::uint64_t seed);

}  // namespace persuade::testing

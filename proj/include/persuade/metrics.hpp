#pragma once

// Batch metrics over episode records, LLM-scored quality dimensions,
// blind A/B comparison and ordinal rater agreement.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "persuade/episode.hpp"
#include "persuade/parsers.hpp"

namespace persuade {

struct DomainStats {
  std::string domain;
  int n = 0;
  int successes = 0;
  double success_rate = 0.0;

  bool operator==(const DomainStats&) const = default;
};

struct Dispersion {
  double range = 0.0;
  double sd = 0.0;
};

/// Mean per-dimension quality scores; absent when no dialogue was scored.
struct QualityMeans {
  std::optional<double> persuasive;
  std::optional<double> logic;
  std::optional<double> helpful;
  int n_persuasive = 0;
  int n_logic = 0;
  int n_helpful = 0;
};

struct MetricsReport {
  /// Completed (non-aborted) records feeding the metrics.
  std::size_t n_total = 0;
  std::size_t n_aborted = 0;
  double success = 0.0;
  double avg_turn = 0.0;
  double range = 0.0;
  double sd = 0.0;
  QualityMeans quality;
  /// Sorted by rate, descending; ties by domain name.
  std::vector<DomainStats> per_domain;
  std::vector<std::string> notes;
};

/// Fraction of records with a judged success. Throws Error(kUndefinedMetric)
/// on empty input and Error(kPrecondition) if any record was aborted.
double success_rate(const std::vector<EpisodeRecord>& records);

/// Mean of success_turn, or t_max for failures.
double avg_turn(const std::vector<EpisodeRecord>& records);

std::vector<DomainStats> per_domain_stats(const std::vector<EpisodeRecord>& records);

/// max - min and population standard deviation of the domain rates.
/// Domains with n = 0 are skipped.
Dispersion dispersion(const std::vector<DomainStats>& per_domain);
Dispersion dispersion_of_rates(const std::vector<double>& rates);

/// Scores keyed by scenario id.
struct DialogueScores {
  std::optional<int> persuasive;
  std::optional<int> logic;
  std::optional<int> helpful;
};
using ScoreTable = std::map<std::string, DialogueScores>;

QualityMeans quality_means(const ScoreTable& scores);

/// Aborted records are counted and set aside; the rest feed the metrics.
MetricsReport build_report(const std::vector<EpisodeRecord>& records,
                           const ScoreTable* scores = nullptr);

std::string render_table(const MetricsReport& report);
json report_to_json(const MetricsReport& report);

struct JudgeOptions {
  std::string model_id = "default";
  int max_attempts = 3;
};

/// One quality score for a finished dialogue; absent (and logged) when the
/// scorer never produced a valid integer.
std::optional<int> score_dialogue(ChatBackend& backend, const Transcript& transcript,
                                  const std::string& background, ScoreDimension dimension,
                                  const std::string& episode_id = {},
                                  const JudgeOptions& options = {});

/// All three dimensions for every non-aborted record.
ScoreTable score_records(ChatBackend& backend, const std::vector<EpisodeRecord>& records,
                         const std::map<std::string, Scenario>& scenarios,
                         const JudgeOptions& options = {});

// --- A/B -------------------------------------------------------------------

/// Treatment relative to baseline. Ordinal: lose < tie < win.
enum class AbOutcome { kLose = 0, kTie = 1, kWin = 2 };

std::string_view ab_outcome_name(AbOutcome outcome);
std::optional<AbOutcome> ab_outcome_from_name(std::string_view name);

enum class DisplayOrder { kBaselineFirst, kTreatmentFirst };

std::string_view display_order_name(DisplayOrder order);

/// Maps a verdict about the displayed pair back to the canonical pair.
AbOutcome derandomize(DisplayOrder order, AbVerdict verdict);

struct AbJudgment {
  std::string item_id;
  /// "llm" or "human:<id>".
  std::string rater;
  AbOutcome outcome = AbOutcome::kTie;
  DisplayOrder order = DisplayOrder::kBaselineFirst;
};

void to_json(json& j, const AbJudgment& a);
void from_json(const json& j, AbJudgment& a);

/// Prompt for the displayed pair.
std::string ab_prompt(const Scenario& context, const Transcript& first, const Transcript& second);

/// Shows the pair in an order drawn from `seed` and the item id, asks the
/// A/B judge, and maps the verdict back. Absent (and logged) when the
/// verdict never parses.
std::optional<AbJudgment> ab_compare(ChatBackend& backend, const std::string& item_id,
                                     const Transcript& baseline, const Transcript& treatment,
                                     const Scenario& context, std::uint64_t seed,
                                     const JudgeOptions& options = {});

struct AbTally {
  int win = 0;
  int tie = 0;
  int lose = 0;
  int total() const { return win + tie + lose; }
};

AbTally tally(const std::vector<AbJudgment>& judgments);

// --- agreement -------------------------------------------------------------

struct KappaResult {
  double kappa = 0.0;
  /// Both sequences use one and the same category; kappa is defined as 1.
  bool degenerate = false;
};

/// Quadratic-weighted Cohen's kappa over the three ordinal outcomes.
/// Throws Error(kValidation) on unequal or empty sequences.
KappaResult weighted_kappa(const std::vector<AbOutcome>& a, const std::vector<AbOutcome>& b);

struct AgreementReport {
  std::vector<KappaResult> per_subset;
  double mean_kappa = 0.0;
};

/// Mean of per-subset kappa values. Throws Error(kValidation) with no subsets.
AgreementReport agreement_report(
    const std::vector<std::pair<std::vector<AbOutcome>, std::vector<AbOutcome>>>& subsets);

}  // namespace persuade

#include "persuade/metrics.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "persuade/hashing.hpp"
#include "persuade/prompts.hpp"

namespace persuade {

namespace {

void require_usable(const std::vector<EpisodeRecord>& records, const char* metric) {
  if (records.empty()) {
    throw Error(ErrorKind::kUndefinedMetric, std::string(metric) + " of an empty batch");
  }
  for (const auto& r : records) {
    if (r.aborted()) {
      throw Error(ErrorKind::kPrecondition,
                  std::string(metric) + ": aborted record " + r.scenario_id + " in input");
    }
  }
}

std::string fmt_optional(const std::optional<double>& v) {
  return v ? fmt::format("{:.2f}", *v) : std::string("n/a");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

TemplateId score_template(ScoreDimension d) {
  switch (d) {
    case ScoreDimension::kPersuasive: return TemplateId::kScorePersuasive;
    case ScoreDimension::kLogic: return TemplateId::kScoreLogic;
    case ScoreDimension::kHelpful: return TemplateId::kScoreHelpful;
  }
  return TemplateId::kScorePersuasive;
}

}  // namespace

double success_rate(const std::vector<EpisodeRecord>& records) {
  require_usable(records, "success rate");
  std::size_t wins = 0;
  for (const auto& r : records) wins += r.outcome.success ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(records.size());
}

double avg_turn(const std::vector<EpisodeRecord>& records) {
  require_usable(records, "average turn");
  double sum = 0.0;
  for (const auto& r : records) {
    sum += r.outcome.success_turn ? *r.outcome.success_turn : r.t_max;
  }
  return sum / static_cast<double>(records.size());
}

std::vector<DomainStats> per_domain_stats(const std::vector<EpisodeRecord>& records) {
  std::map<std::string, DomainStats> by_domain;
  for (const auto& r : records) {
    if (r.aborted()) continue;
    auto& s = by_domain[r.domain];
    s.domain = r.domain;
    ++s.n;
    if (r.outcome.success) ++s.successes;
  }
  std::vector<DomainStats> out;
  for (auto& [_, s] : by_domain) {
    s.success_rate = static_cast<double>(s.successes) / s.n;
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [](const DomainStats& a, const DomainStats& b) {
    return a.success_rate > b.success_rate;
  });
  return out;
}

Dispersion dispersion_of_rates(const std::vector<double>& rates) {
  if (rates.empty()) return {};
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= static_cast<double>(rates.size());
  double ss = 0.0;
  for (double r : rates) ss += (r - mean) * (r - mean);
  return {*hi - *lo, std::sqrt(ss / static_cast<double>(rates.size()))};
}

Dispersion dispersion(const std::vector<DomainStats>& per_domain) {
  std::vector<double> rates;
  for (const auto& d : per_domain) {
    if (d.n > 0) rates.push_back(d.success_rate);
  }
  return dispersion_of_rates(rates);
}

QualityMeans quality_means(const ScoreTable& scores) {
  QualityMeans q;
  double sp = 0, sl = 0, sh = 0;
  for (const auto& [_, s] : scores) {
    if (s.persuasive) sp += *s.persuasive, ++q.n_persuasive;
    if (s.logic) sl += *s.logic, ++q.n_logic;
    if (s.helpful) sh += *s.helpful, ++q.n_helpful;
  }
  if (q.n_persuasive) q.persuasive = sp / q.n_persuasive;
  if (q.n_logic) q.logic = sl / q.n_logic;
  if (q.n_helpful) q.helpful = sh / q.n_helpful;
  return q;
}

MetricsReport build_report(const std::vector<EpisodeRecord>& records, const ScoreTable* scores) {
  MetricsReport report;
  std::vector<EpisodeRecord> usable;
  for (const auto& r : records) {
    if (r.aborted()) {
      ++report.n_aborted;
    } else {
      usable.push_back(r);
    }
  }
  report.n_total = usable.size();
  if (report.n_aborted) {
    report.notes.push_back(fmt::format("{} aborted episode(s) excluded", report.n_aborted));
  }
  if (usable.empty()) {
    report.notes.push_back("no completed episodes; rates undefined");
    return report;
  }
  report.success = success_rate(usable);
  report.avg_turn = avg_turn(usable);
  report.per_domain = per_domain_stats(usable);
  const Dispersion d = dispersion(report.per_domain);
  report.range = d.range;
  report.sd = d.sd;
  if (scores) {
    ScoreTable kept;
    for (const auto& r : usable) {
      auto it = scores->find(r.scenario_id);
      if (it != scores->end()) kept.emplace(it->first, it->second);
    }
    report.quality = quality_means(kept);
  }
  return report;
}

std::string render_table(const MetricsReport& r) {
  std::string out;
  out += fmt::format("{:<12}{:>10}\n", "Metric", "Value");
  out += fmt::format("{:<12}{:>10.4f}\n", "Success", r.success);
  out += fmt::format("{:<12}{:>10}\n", "Persuasive", fmt_optional(r.quality.persuasive));
  out += fmt::format("{:<12}{:>10}\n", "Logic", fmt_optional(r.quality.logic));
  out += fmt::format("{:<12}{:>10}\n", "Helpful", fmt_optional(r.quality.helpful));
  out += fmt::format("{:<12}{:>10.4f}\n", "Range", r.range);
  out += fmt::format("{:<12}{:>10.4f}\n", "SD", r.sd);
  out += fmt::format("{:<12}{:>10.2f}\n", "Avg_Turn", r.avg_turn);
  out += fmt::format("\nEpisodes: {} completed, {} aborted\n", r.n_total, r.n_aborted);
  if (!r.per_domain.empty()) {
    out += fmt::format("\n{:<28}{:>6}{:>10}{:>8}\n", "Domain", "n", "success", "rate");
    for (const auto& d : r.per_domain) {
      out += fmt::format("{:<28}{:>6}{:>10}{:>8.4f}\n", d.domain, d.n, d.successes,
                         d.success_rate);
    }
  }
  for (const auto& note : r.notes) out += "note: " + note + "\n";
  return out;
}

json report_to_json(const MetricsReport& r) {
  json domains = json::array();
  for (const auto& d : r.per_domain) {
    domains.push_back(
        {{"domain", d.domain}, {"n", d.n}, {"successes", d.successes}, {"rate", d.success_rate}});
  }
  return {{"n_total", r.n_total},
          {"n_aborted", r.n_aborted},
          {"success", r.success},
          {"persuasive", optional_number(r.quality.persuasive)},
          {"logic", optional_number(r.quality.logic)},
          {"helpful", optional_number(r.quality.helpful)},
          {"range", r.range},
          {"sd", r.sd},
          {"avg_turn", r.avg_turn},
          {"per_domain", std::move(domains)},
          {"notes", r.notes}};
}

// ---------------------------------------------------------------------------
// Scoring

std::optional<int> score_dialogue(ChatBackend& backend, const Transcript& transcript,
                                  const std::string& background, ScoreDimension dimension,
                                  const std::string& episode_id, const JudgeOptions& options) {
  if (transcript.complete_turns() < 1) {
    throw Error(ErrorKind::kPrecondition, "scoring needs a complete dialogue");
  }
  ChatRequest req;
  req.role = AgentRole::kScorer;
  req.prompt = render(score_template(dimension),
                      {{"background", background}, {"dialogue", format_dialogue(transcript)}});
  req.model_id = options.model_id;
  req.temperature = default_temperature(AgentRole::kScorer);
  req.max_output = 16;
  req.episode_id = episode_id;
  try {
    return complete_parsed(
        backend, req, [dimension](std::string_view raw) { return parse_score(raw, dimension); },
        options.max_attempts);
  } catch (const ParseFailure& e) {
    spdlog::warn("{}: {} score dropped: {}", episode_id, score_label(dimension), e.what());
    return std::nullopt;
  }
}

ScoreTable score_records(ChatBackend& backend, const std::vector<EpisodeRecord>& records,
                         const std::map<std::string, Scenario>& scenarios,
                         const JudgeOptions& options) {
  ScoreTable table;
  for (const auto& r : records) {
    if (r.aborted() || r.transcript.complete_turns() < 1) continue;
    auto it = scenarios.find(r.scenario_id);
    if (it == scenarios.end()) {
      throw Error(ErrorKind::kNotFound, "no scenario for record " + r.scenario_id);
    }
    DialogueScores s;
    s.persuasive = score_dialogue(backend, r.transcript, it->second.background,
                                  ScoreDimension::kPersuasive, r.scenario_id, options);
    s.logic = score_dialogue(backend, r.transcript, it->second.background, ScoreDimension::kLogic,
                             r.scenario_id, options);
    s.helpful = score_dialogue(backend, r.transcript, it->second.background,
                               ScoreDimension::kHelpful, r.scenario_id, options);
    table[r.scenario_id] = s;
  }
  return table;
}

// ---------------------------------------------------------------------------
// A/B

std::string_view ab_outcome_name(AbOutcome outcome) {
  switch (outcome) {
    case AbOutcome::kLose: return "lose";
    case AbOutcome::kTie: return "tie";
    case AbOutcome::kWin: return "win";
  }
  return "tie";
}

std::optional<AbOutcome> ab_outcome_from_name(std::string_view name) {
  if (name == "win") return AbOutcome::kWin;
  if (name == "tie") return AbOutcome::kTie;
  if (name == "lose") return AbOutcome::kLose;
  return std::nullopt;
}

std::string_view display_order_name(DisplayOrder order) {
  return order == DisplayOrder::kBaselineFirst ? "baseline_first" : "treatment_first";
}

AbOutcome derandomize(DisplayOrder order, AbVerdict verdict) {
  if (verdict == AbVerdict::kTie) return AbOutcome::kTie;
  const bool first_wins = verdict == AbVerdict::kDialogue1;
  const bool treatment_first = order == DisplayOrder::kTreatmentFirst;
  return first_wins == treatment_first ? AbOutcome::kWin : AbOutcome::kLose;
}

void to_json(json& j, const AbJudgment& a) {
  j = {{"item_id", a.item_id},
       {"rater", a.rater},
       {"verdict", ab_outcome_name(a.outcome)},
       {"presentation_order", display_order_name(a.order)}};
}

void from_json(const json& j, AbJudgment& a) {
  a.item_id = j.at("item_id").get<std::string>();
  a.rater = j.at("rater").get<std::string>();
  auto outcome = ab_outcome_from_name(j.at("verdict").get<std::string>());
  if (!outcome) throw Error(ErrorKind::kSchema, "verdict must be win, tie or lose");
  a.outcome = *outcome;
  a.order = j.value("presentation_order", "baseline_first") == "treatment_first"
                ? DisplayOrder::kTreatmentFirst
                : DisplayOrder::kBaselineFirst;
}

std::string ab_prompt(const Scenario& context, const Transcript& first, const Transcript& second) {
  return render(TemplateId::kAbJudge, {{"background", context.background},
                                       {"preventive", format_mental_state(context.preventive)},
                                       {"generative", format_mental_state(context.generative)},
                                       {"dialogue_1", format_dialogue(first)},
                                       {"dialogue_2", format_dialogue(second)}});
}

std::optional<AbJudgment> ab_compare(ChatBackend& backend, const std::string& item_id,
                                     const Transcript& baseline, const Transcript& treatment,
                                     const Scenario& context, std::uint64_t seed,
                                     const JudgeOptions& options) {
  if (baseline.complete_turns() < 1 || treatment.complete_turns() < 1) {
    throw Error(ErrorKind::kPrecondition, "A/B comparison needs two complete dialogues");
  }
  std::mt19937_64 rng(seed ^ fnv1a64(item_id));
  const DisplayOrder order = (rng() & 1U) ? DisplayOrder::kTreatmentFirst
                                          : DisplayOrder::kBaselineFirst;
  const bool tf = order == DisplayOrder::kTreatmentFirst;
  ChatRequest req;
  req.role = AgentRole::kAbJudge;
  req.prompt = ab_prompt(context, tf ? treatment : baseline, tf ? baseline : treatment);
  req.model_id = options.model_id;
  req.temperature = default_temperature(AgentRole::kAbJudge);
  req.max_output = 2048;
  req.episode_id = item_id;
  try {
    const AbVerdict verdict = complete_parsed(backend, req, parse_ab_verdict, options.max_attempts);
    return AbJudgment{item_id, "llm", derandomize(order, verdict), order};
  } catch (const ParseFailure& e) {
    spdlog::warn("A/B item {} skipped: {}", item_id, e.what());
    return std::nullopt;
  }
}

AbTally tally(const std::vector<AbJudgment>& judgments) {
  AbTally t;
  for (const auto& j : judgments) {
    switch (j.outcome) {
      case AbOutcome::kWin: ++t.win; break;
      case AbOutcome::kTie: ++t.tie; break;
      case AbOutcome::kLose: ++t.lose; break;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Agreement

KappaResult weighted_kappa(const std::vector<AbOutcome>& a, const std::vector<AbOutcome>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kValidation, "label sequences differ in length");
  }
  if (a.empty()) throw Error(ErrorKind::kValidation, "label sequences are empty");
  constexpr int k = 3;
  std::array<std::array<double, k>, k> observed{};
  std::array<double, k> row{}, col{};
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int x = static_cast<int>(a[i]);
    const int y = static_cast<int>(b[i]);
    observed[x][y] += 1.0 / n;
    row[x] += 1.0 / n;
    col[y] += 1.0 / n;
  }
  double num = 0.0, den = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double w = std::pow(static_cast<double>(i - j) / (k - 1), 2);
      num += w * observed[i][j];
      den += w * row[i] * col[j];
    }
  }
  if (den == 0.0) {
    // Only possible when both raters used one and the same category.
    spdlog::warn("weighted kappa: single shared category, defined as 1");
    return {1.0, true};
  }
  return {1.0 - num / den, false};
}

AgreementReport agreement_report(
    const std::vector<std::pair<std::vector<AbOutcome>, std::vector<AbOutcome>>>& subsets) {
  if (subsets.empty()) throw Error(ErrorKind::kValidation, "no subsets to average");
  AgreementReport report;
  double sum = 0.0;
  for (const auto& [llm, human] : subsets) {
    report.per_subset.push_back(weighted_kappa(llm, human));
    sum += report.per_subset.back().kappa;
  }
  report.mean_kappa = sum / static_cast<double>(subsets.size());
  return report;
}

}  // namespace persuade

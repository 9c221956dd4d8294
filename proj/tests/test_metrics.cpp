#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "persuade/metrics.hpp"
#include "support.hpp"

namespace persuade {
namespace {

EpisodeRecord rec(const std::string& id, const std::string& domain, std::optional<int> success_turn,
                  int t_max = 4) {
  EpisodeRecord r;
  r.scenario_id = id;
  r.domain = domain;
  r.t_max = t_max;
  r.outcome.success = success_turn.has_value();
  r.outcome.success_turn = success_turn;
  r.outcome.turns_used = success_turn.value_or(t_max);
  return r;
}

constexpr auto L = AbOutcome::kLose;
constexpr auto T = AbOutcome::kTie;
constexpr auto W = AbOutcome::kWin;

/// Textbook weighted kappa: 1 - sum(w*O) / sum(w*E), w = ((i-j)/(k-1))^2.
double naive_kappa(const std::vector<AbOutcome>& a, const std::vector<AbOutcome>& b) {
  const double n = static_cast<double>(a.size());
  double obs[3][3] = {};
  double ra[3] = {}, cb[3] = {};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int x = static_cast<int>(a[i]), y = static_cast<int>(b[i]);
    obs[x][y] += 1;
    ra[x] += 1;
    cb[y] += 1;
  }
  double num = 0, den = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double w = (i - j) * (i - j) / 4.0;
      num += w * obs[i][j];
      den += w * ra[i] * cb[j] / n;
    }
  }
  return 1.0 - num / den;
}

TEST(Metrics, SuccessRateThreeOfEight) {
  std::vector<EpisodeRecord> rs;
  for (int i = 0; i < 8; ++i) {
    rs.push_back(rec("e" + std::to_string(i), "Health", i < 3 ? std::optional<int>(2) : std::nullopt));
  }
  EXPECT_DOUBLE_EQ(success_rate(rs), 0.375);
}

TEST(Metrics, AvgTurnCountsFailuresAtTmax) {
  EXPECT_DOUBLE_EQ(avg_turn({rec("a", "H", 2), rec("b", "H", std::nullopt)}), 3.0);
}

TEST(Metrics, EmptyAndAbortedInputs) {
  try {
    success_rate({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUndefinedMetric);
  }
  EXPECT_THROW(avg_turn({}), Error);
  EpisodeRecord aborted = rec("x", "H", std::nullopt);
  aborted.infrastructure_failure = "transport";
  try {
    success_rate({aborted});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  }
}

TEST(Metrics, DispersionOfThreeRates) {
  const Dispersion d = dispersion_of_rates({0.2, 0.4, 0.9});
  EXPECT_NEAR(d.range, 0.7, 1e-12);
  EXPECT_NEAR(d.sd, 0.2943920288775949, 1e-12);
}

TEST(Metrics, RangeAnchor) {
  EXPECT_NEAR(dispersion_of_rates({0.8824, 0.1667}).range, 0.7157, 1e-4);
}

TEST(Metrics, PerDomainUsesEveryListedDomain) {
  EpisodeRecord multi = rec("m", "Education", 1);
  std::vector<EpisodeRecord> rs = {rec("a", "Health", 1), rec("b", "Health", std::nullopt), multi,
                                   rec("c", "Finance", std::nullopt)};
  const auto stats = per_domain_stats(rs);
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_EQ(stats[0].domain, "Education");
  EXPECT_DOUBLE_EQ(stats[0].success_rate, 1.0);
  EXPECT_EQ(stats[1].domain, "Health");
  EXPECT_EQ(stats[1].n, 2);
  EXPECT_EQ(stats[2].domain, "Finance");
  const Dispersion d = dispersion(stats);
  EXPECT_DOUBLE_EQ(d.range, 1.0);
}

TEST(Metrics, ReportSetsAbortedAside) {
  EpisodeRecord aborted = rec("x", "Health", std::nullopt);
  aborted.infrastructure_failure = "script miss";
  const auto report = build_report({rec("a", "Health", 1), rec("b", "Health", std::nullopt), aborted});
  EXPECT_EQ(report.n_total, 2u);
  EXPECT_EQ(report.n_aborted, 1u);
  EXPECT_DOUBLE_EQ(report.success, 0.5);
  EXPECT_DOUBLE_EQ(report.avg_turn, 2.5);
  const std::string table = render_table(report);
  EXPECT_NE(table.find("Success"), std::string::npos);
  EXPECT_NE(table.find("Health"), std::string::npos);
  EXPECT_EQ(report_to_json(report)["n_aborted"], 1);
}

TEST(Metrics, NaiveOraclesOnRandomBatches) {
  std::mt19937_64 rng(99);
  const std::vector<std::string> domains = {"A", "B", "C", "D", "E"};
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 40);
    const int t_max = 1 + static_cast<int>(rng() % 6);
    std::vector<EpisodeRecord> rs;
    for (int i = 0; i < n; ++i) {
      const int t = static_cast<int>(rng() % (t_max + 1));
      rs.push_back(rec("e" + std::to_string(i), domains[rng() % domains.size()],
                       t ? std::optional<int>(t) : std::nullopt, t_max));
    }
    double succ = 0, turns = 0;
    std::map<std::string, std::pair<int, int>> by_domain;
    for (const auto& r : rs) {
      succ += r.outcome.success;
      turns += r.outcome.success ? *r.outcome.success_turn : r.t_max;
      by_domain[r.domain].first += r.outcome.success;
      by_domain[r.domain].second += 1;
    }
    ASSERT_NEAR(success_rate(rs), succ / n, 1e-12);
    ASSERT_NEAR(avg_turn(rs), turns / n, 1e-12);
    std::vector<double> rates;
    for (const auto& [_, v] : by_domain) rates.push_back(double(v.first) / v.second);
    double mean = 0;
    for (double r : rates) mean += r;
    mean /= rates.size();
    double var = 0;
    for (double r : rates) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / rates.size());
    const double range = *std::max_element(rates.begin(), rates.end()) -
                         *std::min_element(rates.begin(), rates.end());
    const Dispersion d = dispersion(per_domain_stats(rs));
    ASSERT_NEAR(d.range, range, 1e-12) << trial;
    ASSERT_NEAR(d.sd, sd, 1e-12) << trial;
  }
}

TEST(Quality, UnparseableScoreIsExcluded) {
  ScriptedBackend b;
  b.add(AgentRole::kScorer, "a", 0, 0, "Helpfulness: 6");
  b.add(AgentRole::kScorer, "b", 0, 0, "Helpfulness: 8");
  b.add(AgentRole::kScorer, "c", 0, 0, "Helpfulness: 0");
  Transcript t;
  t.append({Speaker::kPersuader, 1, "Hi."});
  t.append({Speaker::kPersuadee, 1, "Hello."});
  ScoreTable table;
  for (const char* id : {"a", "b", "c"}) {
    table[id].helpful = score_dialogue(b, t, "bg", ScoreDimension::kHelpful, id);
  }
  EXPECT_FALSE(table["c"].helpful.has_value());
  const QualityMeans q = quality_means(table);
  ASSERT_TRUE(q.helpful.has_value());
  EXPECT_DOUBLE_EQ(*q.helpful, 7.0);
  EXPECT_EQ(q.n_helpful, 2);
  EXPECT_FALSE(q.persuasive.has_value());
}

TEST(Ab, DerandomizeAllCases) {
  using V = AbVerdict;
  using O = DisplayOrder;
  EXPECT_EQ(derandomize(O::kBaselineFirst, V::kDialogue1), L);
  EXPECT_EQ(derandomize(O::kBaselineFirst, V::kDialogue2), W);
  EXPECT_EQ(derandomize(O::kBaselineFirst, V::kTie), T);
  EXPECT_EQ(derandomize(O::kTreatmentFirst, V::kDialogue1), W);
  EXPECT_EQ(derandomize(O::kTreatmentFirst, V::kDialogue2), L);
  EXPECT_EQ(derandomize(O::kTreatmentFirst, V::kTie), T);
}

TEST(Ab, CompareMapsVerdictBack) {
  ScriptedBackend b;
  b.add(AgentRole::kAbJudge, "*", 0, 0, "reasoning...\n###2. More Persuasive: Dialogue 2###");
  Transcript base, treat;
  base.append({Speaker::kPersuader, 1, "Base line."});
  base.append({Speaker::kPersuadee, 1, "Meh."});
  treat.append({Speaker::kPersuader, 1, "Treatment line."});
  treat.append({Speaker::kPersuadee, 1, "Sure."});
  const Scenario s = testing::make_scenario("ab", "Health");
  int firsts = 0;
  for (int i = 0; i < 40; ++i) {
    const auto j = ab_compare(b, "item" + std::to_string(i), base, treat, s, 5);
    ASSERT_TRUE(j.has_value());
    EXPECT_EQ(j->outcome, derandomize(j->order, AbVerdict::kDialogue2));
    EXPECT_EQ(j->rater, "llm");
    firsts += j->order == DisplayOrder::kTreatmentFirst;
    // Same seed and item, same order.
    EXPECT_EQ(ab_compare(b, "item" + std::to_string(i), base, treat, s, 5)->order, j->order);
  }
  EXPECT_GT(firsts, 5);
  EXPECT_LT(firsts, 35);
}

TEST(Ab, PromptShowsBothDialoguesInOrder) {
  Transcript one, two;
  one.append({Speaker::kPersuader, 1, "FIRST"});
  two.append({Speaker::kPersuader, 1, "SECOND"});
  const std::string p = ab_prompt(testing::make_scenario("x", "Health"), one, two);
  EXPECT_LT(p.find("FIRST"), p.find("SECOND"));
}

TEST(Ab, TallyAndJsonRoundTrip) {
  std::vector<AbJudgment> js = {{"a", "llm", W, DisplayOrder::kBaselineFirst},
                                {"b", "llm", T, DisplayOrder::kTreatmentFirst},
                                {"c", "llm", W, DisplayOrder::kTreatmentFirst}};
  const AbTally t = tally(js);
  EXPECT_EQ(t.win, 2);
  EXPECT_EQ(t.tie, 1);
  EXPECT_EQ(t.total(), 3);
  const AbJudgment back = json(js[1]).get<AbJudgment>();
  EXPECT_EQ(back.item_id, "b");
  EXPECT_EQ(back.outcome, T);
  EXPECT_EQ(back.order, DisplayOrder::kTreatmentFirst);
}

TEST(Kappa, HandComputedExample) {
  // O off-diagonal: (tie, lose) and (win, tie), 1/6 each at weight 1/4 -> 1/12.
  // Marginals a = (1, 2, 3)/6, b = (2, 2, 2)/6; sum w*E = 1/3. kappa = 1 - 1/4.
  const std::vector<AbOutcome> a = {W, W, T, L, T, W};
  const std::vector<AbOutcome> b = {W, T, T, L, L, W};
  EXPECT_NEAR(weighted_kappa(a, b).kappa, 0.75, 1e-9);
  EXPECT_NEAR(naive_kappa(a, b), 0.75, 1e-12);
  // Relabelling that keeps ordinal distances (reversal) keeps kappa.
  auto flip = [](std::vector<AbOutcome> v) {
    for (auto& x : v) x = static_cast<AbOutcome>(2 - static_cast<int>(x));
    return v;
  };
  EXPECT_NEAR(weighted_kappa(flip(a), flip(b)).kappa, 0.75, 1e-12);
}

TEST(Kappa, SelfAgreementAndSymmetry) {
  const std::vector<AbOutcome> a = {L, T, W, W, T, L, W};
  const std::vector<AbOutcome> b = {L, W, W, T, T, L, L};
  EXPECT_DOUBLE_EQ(weighted_kappa(a, a).kappa, 1.0);
  EXPECT_NEAR(weighted_kappa(a, b).kappa, weighted_kappa(b, a).kappa, 1e-12);
  EXPECT_NEAR(weighted_kappa(a, b).kappa, naive_kappa(a, b), 1e-12);
}

TEST(Kappa, DegenerateSingleCategory) {
  const auto r = weighted_kappa({T, T, T}, {T, T, T});
  EXPECT_TRUE(r.degenerate);
  EXPECT_DOUBLE_EQ(r.kappa, 1.0);
  EXPECT_THROW(weighted_kappa({}, {}), Error);
  EXPECT_THROW(weighted_kappa({T}, {T, W}), Error);
}

TEST(Kappa, IndependentRatersNearZero) {
  std::mt19937_64 rng(4242);
  std::vector<AbOutcome> a, b;
  for (int i = 0; i < 10000; ++i) {
    a.push_back(static_cast<AbOutcome>(rng() % 3));
    b.push_back(static_cast<AbOutcome>(rng() % 3));
  }
  EXPECT_LT(std::abs(weighted_kappa(a, b).kappa), 0.05);
}

TEST(Kappa, MatchesNaiveOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 30);
    std::vector<AbOutcome> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(static_cast<AbOutcome>(rng() % 3));
      b.push_back(rng() % 3 ? a.back() : static_cast<AbOutcome>(rng() % 3));
    }
    const auto r = weighted_kappa(a, b);
    if (r.degenerate) continue;
    ASSERT_NEAR(r.kappa, naive_kappa(a, b), 1e-12) << trial;
  }
}

TEST(Agreement, MeanOfSubsets) {
  // Two subsets with kappa 0.75 and 1.0.
  const auto rep = agreement_report({{{L, L, L, T}, {L, L, L, W}}, {{L, W}, {L, W}}});
  ASSERT_EQ(rep.per_subset.size(), 2u);
  EXPECT_NEAR(rep.mean_kappa, 0.875, 1e-12);
  EXPECT_THROW(agreement_report({}), Error);
}

}  // namespace
}  // namespace persuade

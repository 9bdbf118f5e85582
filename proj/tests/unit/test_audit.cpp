#include <random>

#include <gtest/gtest.h>

#include "fairaudit/audit.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/report.hpp"
#include "fairaudit/synth.hpp"
#include "unit/helpers.hpp"

using namespace fairaudit;
using fairaudit::testing::cohort_of;
using fairaudit::testing::record;

namespace {

DisparitySignal signal_with(double a, double b, bool fired) {
  DisparitySignal s;
  s.value_a.point = a;
  s.value_b.point = b;
  s.disparity_found = fired;
  return s;
}

ConfounderAssessment assessment(std::optional<DisparitySignal> present, std::optional<DisparitySignal> absent) {
  ConfounderAssessment as;
  as.present.signal = std::move(present);
  as.absent.signal = std::move(absent);
  return as;
}

ConfounderAssessment with_verdict(Verdict v) {
  ConfounderAssessment as;
  as.verdict = v;
  return as;
}

SplitRule sex_rule() { return *find_builtin_rule("sex"); }

// Two sexes, scores drawn so that Male discriminates better than Female.
Cohort sexed_cohort(std::uint64_t seed, int n, double shift_female) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> z(0, 1);
  std::vector<ScanRecord> recs;
  for (int i = 0; i < n; ++i) {
    const bool male = i % 2 == 0;
    const int y = u(rng) < 0.3;
    const double latent = z(rng) + y * (male ? 1.8 : shift_female);
    auto r = record("s" + std::to_string(i), y, 1.0 / (1.0 + std::exp(-latent)));
    r.attributes["sex"] = std::string(male ? "Male" : "Female");
    r.risk_factors["emphysema"] = u(rng) < (male ? 0.2 : 0.5);
    r.risk_factors["pack_years"] = std::round(10 + 60 * u(rng));
    recs.push_back(r);
  }
  return cohort_of(recs, {"sex"}, {"emphysema", "pack_years"});
}

}  // namespace

TEST(Signal, RuleByMetric) {
  AurocComparison c;
  c.p = 0.01;
  EXPECT_TRUE(signal_fires(MetricKind::Auroc, c, std::nullopt, 0.05));
  c.p = 0.05;
  EXPECT_FALSE(signal_fires(MetricKind::Auroc, c, std::nullopt, 0.05));
  EXPECT_TRUE(signal_fires(MetricKind::Sensitivity, std::nullopt, OverlapClass::Disjoint, 0.05));
  EXPECT_FALSE(signal_fires(MetricKind::Sensitivity, std::nullopt, OverlapClass::OneOutside, 0.05));
  EXPECT_FALSE(signal_fires(MetricKind::Specificity, std::nullopt, OverlapClass::Overlapping, 0.05));
}

TEST(Verdict, Cases) {
  const auto s1 = signal_with(0.90, 0.80, true);
  AuditOptions o;
  struct Case {
    std::optional<DisparitySignal> p, a;
    Verdict v;
    const char* reason;
  } cases[] = {
      {signal_with(0.92, 0.84, true), signal_with(0.88, 0.86, false), Verdict::NotConfounded, ""},
      {signal_with(0.90, 0.89, false), signal_with(0.93, 0.85, true), Verdict::NotConfounded, ""},
      {signal_with(0.90, 0.88, false), signal_with(0.91, 0.90, false), Verdict::PotentialConfounder, ""},
      {signal_with(0.90, 0.78, false), signal_with(0.91, 0.90, false), Verdict::Indeterminate, "not-reduced"},
      {signal_with(0.80, 0.90, true), signal_with(0.91, 0.90, false), Verdict::Indeterminate, "reversed"},
      {std::nullopt, signal_with(0.93, 0.85, true), Verdict::Indeterminate, "insufficient-data"},
      {signal_with(0.90, 0.89, false), std::nullopt, Verdict::Indeterminate, "insufficient-data"},
  };
  for (auto& c : cases) {
    auto as = assessment(c.p, c.a);
    assign_verdict(as, s1, o);
    EXPECT_EQ(as.verdict, c.v);
    EXPECT_EQ(as.reason, c.reason);
  }
}

TEST(Verdict, MarginTightensReduction) {
  const auto s1 = signal_with(0.90, 0.80, true);
  auto as = assessment(signal_with(0.90, 0.82, false), signal_with(0.90, 0.85, false));
  AuditOptions o;
  assign_verdict(as, s1, o);
  EXPECT_EQ(as.verdict, Verdict::PotentialConfounder);
  o.reduction_margin = 0.03;
  assign_verdict(as, s1, o);
  EXPECT_EQ(as.verdict, Verdict::Indeterminate);
}

// Enumerate every combination of subset outcomes and check the verdict
// against its defining properties.
TEST(Verdict, PropertiesOverAllCombinations) {
  const auto s1 = signal_with(0.85, 0.80, true);
  const double gaps[] = {-0.08, -0.02, 0.0, 0.02, 0.05, 0.08};
  AuditOptions o;
  for (double gp : gaps)
    for (double ga : gaps)
      for (bool fp : {false, true})
        for (bool fa : {false, true}) {
          auto as = assessment(signal_with(0.8 + gp, 0.8, fp), signal_with(0.8 + ga, 0.8, fa));
          assign_verdict(as, s1, o);
          const bool persisted = (fp && gp > 0) || (fa && ga > 0);
          EXPECT_EQ(as.verdict == Verdict::NotConfounded, persisted);
          if (as.verdict == Verdict::PotentialConfounder) {
            EXPECT_FALSE(fp || fa);
            EXPECT_LT(std::abs(gp), 0.05);
            EXPECT_LT(std::abs(ga), 0.05);
          }
          if (!persisted && !fp && !fa && std::abs(gp) < 0.05 && std::abs(ga) < 0.05) {
            EXPECT_EQ(as.verdict, Verdict::PotentialConfounder);
          }
        }
}

TEST(Outcome, Classification) {
  const auto fired = signal_with(0.9, 0.8, true);
  const auto quiet = signal_with(0.9, 0.8, false);
  using V = Verdict;
  std::vector<ConfounderAssessment> none;
  EXPECT_EQ(classify_outcome(quiet, none), Outcome::NoDisparity);
  EXPECT_EQ(classify_outcome(fired, none), Outcome::UnexplainedDisparity);
  std::vector<ConfounderAssessment> all_nc = {with_verdict(V::NotConfounded), with_verdict(V::NotConfounded)};
  EXPECT_EQ(classify_outcome(fired, all_nc), Outcome::UnexplainedDisparity);
  std::vector<ConfounderAssessment> one_pc = {with_verdict(V::NotConfounded), with_verdict(V::Indeterminate),
                                              with_verdict(V::PotentialConfounder)};
  EXPECT_EQ(classify_outcome(fired, one_pc), Outcome::ConfoundedBy);
  std::vector<ConfounderAssessment> ind = {with_verdict(V::NotConfounded), with_verdict(V::Indeterminate)};
  EXPECT_EQ(classify_outcome(fired, ind), Outcome::Inconclusive);
}

TEST(Stage1, MatchesDirectComputation) {
  const auto c = sexed_cohort(31, 1200, 0.9);
  AuditOptions o;
  o.bootstrap.n_resamples = 200;
  const std::vector<Policy> policies = {Policy::target_sensitivity(0.9)};
  const auto ops = resolve_operating_points(c, "m", policies);
  const auto signals = stage1(c, "m", sex_rule(), ops, o);
  ASSERT_EQ(signals.size(), 3u);
  EXPECT_EQ(signals[0].metric, MetricKind::Auroc);
  EXPECT_EQ(signals[1].metric, MetricKind::Sensitivity);
  EXPECT_EQ(signals[2].metric, MetricKind::Specificity);

  const auto p = partition(c, sex_rule());
  auto [sm, ym] = p.a.scores_and_labels("m");
  auto [sf, yf] = p.b.scores_and_labels("m");
  EXPECT_DOUBLE_EQ(signals[0].value_a.point, auroc(sm, ym));
  EXPECT_DOUBLE_EQ(signals[0].value_b.point, auroc(sf, yf));
  const auto cmp = compare_auroc({auroc(sm, ym), signals[0].counts_a.n_pos, signals[0].counts_a.n_neg},
                                 {auroc(sf, yf), signals[0].counts_b.n_pos, signals[0].counts_b.n_neg});
  EXPECT_DOUBLE_EQ(signals[0].comparison->p, cmp.p);
  EXPECT_EQ(signals[0].disparity_found, cmp.p < 0.05);
  EXPECT_EQ(signals[0].counts_a.records, p.a.size());

  // Thresholds come from the overall cohort, not per group.
  EXPECT_DOUBLE_EQ(signals[1].value_a.point, *sens_spec_at(sm, ym, ops[0].threshold).sensitivity);
  EXPECT_DOUBLE_EQ(signals[2].value_b.point, *sens_spec_at(sf, yf, ops[0].threshold).specificity);
  EXPECT_EQ(signals[1].context(), "model=m/split=sex/metric=Sensitivity/policy=sensitivity:0.9");
}

TEST(Stage1, SingleClassGroupIsAComputeError) {
  auto r1 = record("a", 1, 0.9), r2 = record("b", 0, 0.2), r3 = record("c", 1, 0.7);
  r1.attributes["sex"] = std::string("Male");
  r2.attributes["sex"] = std::string("Male");
  r3.attributes["sex"] = std::string("Female");
  const auto c = cohort_of({r1, r2, r3}, {"sex"});
  try {
    stage1(c, "m", sex_rule(), {}, AuditOptions{});
    FAIL();
  } catch (const ComputeError& e) {
    EXPECT_NE(std::string(e.what()).find("Female"), std::string::npos);
  }
}

TEST(Factors, AutoBinning) {
  const auto c = sexed_cohort(32, 200, 1.0);
  const auto emph = bin_factor(c, {"emphysema"});
  EXPECT_FALSE(emph.numeric);
  const auto packs = bin_factor(c, {"pack_years"});
  EXPECT_TRUE(packs.numeric);
  std::vector<double> v;
  for (const auto& r : c.records()) v.push_back(*as_number(*r.lookup("pack_years")));
  EXPECT_DOUBLE_EQ(packs.threshold, median(v));
  const auto fixed = bin_factor(c, {"pack_years", FactorBinning::Threshold, 30.0});
  auto r = c.records()[0];
  r.risk_factors["pack_years"] = 30.0;
  EXPECT_EQ(fixed.present(r), false);
  r.risk_factors["pack_years"] = 30.5;
  EXPECT_EQ(fixed.present(r), true);
  EXPECT_EQ(fixed.present_label(), "> 30");
  EXPECT_THROW(bin_factor(c, {"smoking"}), ValidationError);
  EXPECT_THROW(bin_factor(c, {"sex"}), ValidationError);
}

TEST(Factors, NoduleCountBinsAboveOne) {
  std::vector<ScanRecord> recs;
  for (int i = 0; i < 10; ++i) {
    auto r = record("s" + std::to_string(i), i % 2, 0.1 * i);
    r.attributes["nodule_count"] = static_cast<double>(1 + i % 4);
    recs.push_back(r);
  }
  const auto f = bin_factor(cohort_of(recs, {"nodule_count"}), {"nodule_count"});
  EXPECT_TRUE(f.numeric);
  EXPECT_DOUBLE_EQ(f.threshold, 1.0);
}

TEST(Prevalence, RankedByGapAndMatchesCounts) {
  const auto c = sexed_cohort(33, 2000, 1.0);
  const std::vector<BinnedFactor> factors = {bin_factor(c, {"pack_years"}), bin_factor(c, {"emphysema"})};
  const auto res = prevalence_disparities(c, sex_rule(), factors);
  ASSERT_EQ(res.ranking.size(), 2u);
  EXPECT_EQ(res.ranking[0].factor, "emphysema");
  EXPECT_GE(res.ranking[0].gap, res.ranking[1].gap);
  double male = 0, n_male = 0;
  for (const auto& r : c.records())
    if (*r.lookup("sex") == Value(std::string("Male"))) {
      n_male += 1;
      male += *as_bool(*r.lookup("emphysema"));
    }
  EXPECT_DOUBLE_EQ(res.ranking[0].pct_a, 100.0 * male / n_male);
  EXPECT_DOUBLE_EQ(res.ranking[0].gap, std::abs(res.ranking[0].pct_a - res.ranking[0].pct_b));
}

TEST(Prevalence, FactorMissingForAGroupIsDropped) {
  auto c = sexed_cohort(34, 100, 1.0);
  c = c.with_attribute("copd", [](const ScanRecord& r) -> Value {
    if (*r.lookup("sex") == Value(std::string("Female"))) return std::monostate{};
    return r.label == 1;
  });
  const std::vector<BinnedFactor> factors = {bin_factor(c, {"copd"}), bin_factor(c, {"emphysema"})};
  const auto res = prevalence_disparities(c, sex_rule(), factors);
  ASSERT_EQ(res.ranking.size(), 1u);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("copd"), std::string::npos);
}

TEST(Stage2, RequiresFiredSignalAndCountsMissing) {
  const auto c = sexed_cohort(35, 3000, 0.7);
  AuditOptions o;
  o.bootstrap.n_resamples = 100;
  const auto s1 = stage1(c, "m", sex_rule(), {}, o);
  ASSERT_TRUE(s1[0].disparity_found);
  const std::vector<BinnedFactor> factors = {bin_factor(c, {"emphysema"})};
  const auto as = stage2(c, s1[0], factors, o);
  ASSERT_EQ(as.size(), 1u);
  // The gap is built into the score, not the factor.
  EXPECT_EQ(as[0].verdict, Verdict::NotConfounded);
  EXPECT_EQ(as[0].present.counts_a.records + as[0].absent.counts_a.records, s1[0].counts_a.records);
  EXPECT_THROW(stage2(c, signal_with(0.8, 0.8, false), factors, o), ValidationError);

  o.min_class_count = 100000;
  const auto sparse = stage2(c, s1[0], factors, o);
  EXPECT_EQ(sparse[0].verdict, Verdict::Indeterminate);
  EXPECT_EQ(sparse[0].reason, "insufficient-data");
}

TEST(Config, ParsesFullForm) {
  const auto j = nlohmann::json::parse(R"({
    "cohort": "data/cohort.csv",
    "models": ["venk", "pancan"],
    "splits": ["sex", "age",
               {"name": "site", "attribute": "site", "kind": "categorical", "a": ["north"], "b": ["south", "west"]},
               {"name": "pk", "attribute": "pack_years", "kind": "threshold", "threshold": 30, "inclusive": "high", "a": "high"}],
    "policies": ["sensitivity:0.9", {"kind": "specificity", "level": 0.95}, {"kind": "fixed", "threshold": 0.06}],
    "factors": ["emphysema", {"name": "pack_years", "bin": "threshold", "threshold": 30}],
    "alpha": 0.01,
    "bootstrap": {"n": 500, "seed": 42, "level": 0.9, "stratified": false, "workers": 2},
    "overlap_convention": "symmetric",
    "top_k": 3
  })");
  const auto c = AuditConfig::from_json(j, "/base");
  EXPECT_EQ(c.cohort_path, std::filesystem::path("/base/data/cohort.csv"));
  EXPECT_EQ(c.models.size(), 2u);
  ASSERT_EQ(c.splits.size(), 4u);
  EXPECT_FALSE(c.splits[1].resolved());
  const auto& pk = std::get<NumericThreshold>(c.splits[3].kind);
  EXPECT_EQ(pk.boundary, Boundary::HighInclusive);
  EXPECT_FALSE(pk.a_is_low);
  EXPECT_EQ(c.policies[1], Policy::target_specificity(0.95));
  EXPECT_EQ(c.policies[2], Policy::fixed(0.06));
  EXPECT_EQ(c.factors[1].binning, FactorBinning::Threshold);
  EXPECT_DOUBLE_EQ(c.options.alpha, 0.01);
  EXPECT_EQ(c.options.bootstrap.n_resamples, 500);
  EXPECT_EQ(c.options.bootstrap.seed, 42u);
  EXPECT_FALSE(c.options.bootstrap.stratified);
  EXPECT_EQ(c.options.convention, OverlapConvention::Symmetric);
  EXPECT_EQ(c.options.top_k, 3u);
}

TEST(Config, ErrorsCarryPointers) {
  const std::pair<const char*, const char*> cases[] = {
      {R"({"models": ["m"]})", "/cohort"},
      {R"({"cohort": "c.csv"})", "/models"},
      {R"({"cohort": "c.csv", "models": ["m"], "splits": ["shoe_size"]})", "/splits/0"},
      {R"({"cohort": "c.csv", "models": ["m"], "policies": ["sensitivity:0.9", "recall:0.9"]})", "/policies/1"},
      {R"({"cohort": "c.csv", "models": ["m"], "policies": [{"kind": "sensitivity", "level": 2}]})", "/policies/0/level"},
      {R"({"cohort": "c.csv", "models": ["m"], "alpha": 1.5})", "/alpha"},
      {R"({"cohort": "c.csv", "models": ["m"], "bootstrap": {"n": 0}})", "/bootstrap/n"},
      {R"({"cohort": "c.csv", "models": ["m"], "factors": [{"name": "x", "bin": "quartile"}]})", "/factors/0/bin"},
      {R"({"cohort": "c.csv", "models": ["m"], "splits": [{"name": "s", "attribute": "s", "kind": "categorical", "a": ["x"], "b": ["x"]}]})", "/splits/0/b"},
      {R"({"cohort": "c.csv", "models": [3]})", "/models/0"},
  };
  for (auto [text, pointer] : cases) {
    try {
      AuditConfig::from_json(nlohmann::json::parse(text));
      ADD_FAILURE() << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.pointer(), pointer) << text;
    }
  }
}

TEST(RunAudit, UnknownColumnsPointIntoConfig) {
  const auto c = sexed_cohort(36, 200, 1.0);
  AuditConfig cfg;
  cfg.models = {"m"};
  cfg.splits = {*find_builtin_rule("race")};
  try {
    run_audit(cfg, c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.pointer(), "/splits/0");
  }
  cfg.splits = {sex_rule()};
  cfg.models = {"m", "other"};
  try {
    run_audit(cfg, c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.pointer(), "/models/1");
  }
}

TEST(RunAudit, DeterministicAndWorkerIndependent) {
  const auto c = sexed_cohort(37, 1500, 0.8);
  AuditConfig cfg;
  cfg.models = {"m"};
  cfg.splits = {sex_rule()};
  cfg.policies = {Policy::target_sensitivity(0.9)};
  cfg.factors = {{"emphysema"}, {"pack_years"}};
  cfg.options.bootstrap.n_resamples = 200;
  cfg.options.bootstrap.seed = 5;
  const auto first = report::to_json(run_audit(cfg, c));
  EXPECT_EQ(report::to_json(run_audit(cfg, c)), first);
  cfg.options.bootstrap.workers = 3;
  EXPECT_EQ(report::to_json(run_audit(cfg, c)).dump(), first.dump());
}

TEST(RunAudit, ConfoundedScenarioNamesTheFactor) {
  const auto cfg = AuditConfig::load(std::string(FAIRAUDIT_SOURCE_DIR) + "/scenarios/audit_confounded.json");
  const auto rep = run_audit(cfg);
  const auto& auc = rep.findings.at(0);
  ASSERT_EQ(auc.signal.metric, MetricKind::Auroc);
  EXPECT_TRUE(auc.signal.disparity_found);
  EXPECT_EQ(auc.outcome, Outcome::ConfoundedBy);
  EXPECT_EQ(auc.confounders, std::vector<std::string>{"emphysema"});
  EXPECT_EQ(rep.splits.at(0).prevalence.at(0).factor, "emphysema");
}

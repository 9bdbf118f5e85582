// Acceptance suite. Prints one PASS/FAIL line per criterion; with arguments,
// runs only the listed criteria. Exit status is non-zero when any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fairaudit/audit.hpp"
#include "fairaudit/calibration.hpp"
#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/pancan.hpp"
#include "fairaudit/stats.hpp"
#include "fairaudit/synth.hpp"

using namespace fairaudit;

namespace {

// Pinned tolerances and budgets.
constexpr double kAurocTol = 1e-12;
constexpr double kC1BudgetSec = 10.0;
constexpr double kPLowSex = 5e-4, kPHighSex = 8e-4;
constexpr double kPBmi = 0.001, kPBmiTol = 0.0005;
constexpr double kCoverageLo = 0.92, kCoverageHi = 0.98;
constexpr double kC4BudgetSec = 120.0;
constexpr double kPinTol = 1e-12;
constexpr double kMeanTol = 1e-12;
constexpr double kGradRelTol = 1e-6;
constexpr double kPlattTol = 0.05;
constexpr double kDesignedRate = 0.95;
constexpr double kC7BudgetSec = 300.0;
constexpr double kBinomialTail = 0.005;  // each side of a 99% band

struct Result {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores on a small grid so most instances contain ties; both classes present.
Sample tied_sample(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> level(0, 1 + static_cast<int>(n / 4));
  std::bernoulli_distribution cls(0.4);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = cls(rng);
    s.labels.push_back(y);
    s.scores.push_back(std::min(1.0, (level(rng) + 2 * y) / (3.0 + static_cast<double>(n) / 4)));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

double pairwise_auroc(const Sample& s) {
  long double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] != 1) continue;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j] != 0) continue;
      pairs += 1;
      if (s.scores[i] > s.scores[j]) wins += 1;
      else if (s.scores[i] == s.scores[j]) wins += 0.5L;
    }
  }
  return static_cast<double>(wins / pairs);
}

// ---------------------------------------------------------------------------

Result criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  double worst = 0.0;
  int ties = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto s = tied_sample(rng, size(rng));
    auto sorted = s.scores;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) ++ties;
    worst = std::max(worst, std::abs(auroc(s.scores, s.labels) - pairwise_auroc(s)));
  }
  const double secs = seconds_since(t0);
  return {worst <= kAurocTol && secs < kC1BudgetSec,
          fmt::format("1000 instances ({} with ties), max |diff| {:.2e}, {:.2f} s", ties, worst, secs)};
}

Result criterion2() {
  const auto sex = compare_auroc({0.88, 244, 2226}, {0.81, 337, 3104});
  const auto bmi = compare_auroc({0.81, 372, 3640}, {0.73, 209, 1690});
  const bool ok_sex = sex.p >= kPLowSex && sex.p <= kPHighSex && format_p(sex.p) == "< .001";
  const bool ok_bmi = std::abs(bmi.p - kPBmi) <= kPBmiTol;
  return {ok_sex && ok_bmi, fmt::format("sex p = {:.4e} ({}), bmi p = {:.4e} ({})", sex.p, format_p(sex.p), bmi.p,
                                        format_p(bmi.p))};
}

Result criterion3() {
  const std::string path = std::string(FAIRAUDIT_TEST_DATA) + "/overlap_intervals.csv";
  std::ifstream in(path);
  if (!in) return {false, "missing fixture " + path};
  csv::Reader reader(in);
  std::vector<std::string> header, row;
  reader.next(header);
  auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  auto num = [&](const char* name) { return *csv::parse_double(row.at(col(name))); };
  int rows = 0, agree = 0, agree_sym = 0;
  std::vector<std::string> misses;
  while (reader.next(row)) {
    IntervalEstimate a, b;
    a.point = num("point_a"), a.lo = num("lo_a"), a.hi = num("hi_a");
    b.point = num("point_b"), b.lo = num("lo_b"), b.hi = num("hi_b");
    const std::string mark = row.at(col("mark")) == "none" ? "" : row.at(col("mark"));
    ++rows;
    if (asterisks(classify_overlap(a, b, OverlapConvention::Reference)) == mark) {
      ++agree;
    } else {
      misses.push_back(fmt::format("{}/{}/{}/{}", row[col("metric")], row[col("attribute")], row[col("model")],
                                   row[col("group_b")]));
    }
    if (asterisks(classify_overlap(a, b, OverlapConvention::Symmetric)) == mark) ++agree_sym;
  }
  std::string detail = fmt::format("{}/{} rows agree (symmetric convention: {}/{})", agree, rows, agree_sym, rows);
  if (!misses.empty()) {
    detail += "; disagreeing:";
    for (const auto& m : misses) detail += " " + m;
  }
  return {rows > 0 && agree == rows, detail};
}

bool bitwise_equal(const IntervalEstimate& x, const IntervalEstimate& y) {
  auto bits = [](double d) { return std::bit_cast<std::uint64_t>(d); };
  return bits(x.point) == bits(y.point) && bits(x.lo) == bits(y.lo) && bits(x.hi) == bits(y.hi) &&
         x.n_defined == y.n_defined && x.n_resamples == y.n_resamples && x.seed == y.seed;
}

Result criterion4() {
  const auto t0 = Clock::now();
  // Determinism across worker counts, every metric and both schemes.
  std::mt19937_64 rng(4004);
  bool deterministic = true;
  for (int k = 0; k < 5; ++k) {
    const auto s = tied_sample(rng, 300);
    for (const auto& m : {Metric::auroc(), Metric::sensitivity(0.5), Metric::specificity(0.5)})
      for (bool stratified : {true, false}) {
        BootstrapOptions o;
        o.n_resamples = 500;
        o.seed = 77 + static_cast<std::uint64_t>(k);
        o.stratified = stratified;
        const auto ref = bootstrap_ci(m, s.scores, s.labels, o);
        for (unsigned w : {2u, 4u, 7u}) {
          o.workers = w;
          deterministic = deterministic && bitwise_equal(ref, bootstrap_ci(m, s.scores, s.labels, o));
        }
      }
  }

  // Coverage on binormal data with one common score model.
  const synth::Binormal model{0.0, 1.0, 1.19023216289999, 1.0};
  const double truth = synth::binormal_auroc(model);
  const int n_pos = 100, n_neg = 300, trials = 500;
  int covered = 0;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 gen(derive_seed(4040, static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> z(0.0, 1.0);
    Sample s;
    for (int i = 0; i < n_pos + n_neg; ++i) {
      const int y = i < n_pos;
      s.labels.push_back(y);
      s.scores.push_back(normal_cdf(y ? model.mu1 + model.sigma1 * z(gen) : model.mu0 + model.sigma0 * z(gen)));
    }
    BootstrapOptions o;
    o.n_resamples = 1000;
    o.seed = derive_seed(4041, static_cast<std::uint64_t>(t));
    const auto e = bootstrap_ci(Metric::auroc(), s.scores, s.labels, o);
    covered += e.lo <= truth && truth <= e.hi;
  }
  const double coverage = static_cast<double>(covered) / trials;
  const double secs = seconds_since(t0);
  return {deterministic && coverage >= kCoverageLo && coverage <= kCoverageHi && secs < kC4BudgetSec,
          fmt::format("worker-count determinism {}, coverage {}/{} = {:.1f}% of true AUROC {:.4f}, {:.1f} s",
                      deterministic ? "holds" : "BROKEN", covered, trials, 100.0 * coverage, truth, secs)};
}

Result criterion5() {
  using namespace fairaudit::pancan;
  const auto model = ModelDefinition::default_pancan2b();
  NoduleInput n;
  n.size_mm = 9.0;
  n.type = NoduleType::PartSolid;
  n.spiculation = true;
  ParticipantInput p;
  p.sex = Sex::Male;
  p.age = 60.0;
  auto logit_of = [&](Sex sex, double age) {
    auto q = p;
    q.sex = sex;
    q.age = age;
    return pancan2b_logit(n, q, model);
  };
  const double d_sex = logit_of(Sex::Female, 60) - logit_of(Sex::Male, 60);
  const double d_age = logit_of(Sex::Male, 61) - logit_of(Sex::Male, 60);
  const bool pins = std::abs(d_sex - 0.6011) <= kPinTol && std::abs(d_age - 0.0287) <= kPinTol;
  const bool boundary = classify_ilst(0.06) == IlstBand::ModerateOrAbove &&
                        classify_ilst(std::nextafter(0.06, 0.0)) == IlstBand::BelowModerate;
  std::mt19937_64 rng(5005);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool max_ok = true;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> risks(1 + k % 8);
    for (auto& r : risks) r = u(rng);
    const double expect = *std::max_element(risks.begin(), risks.end());
    const double got = scan_score(risks);
    std::shuffle(risks.begin(), risks.end(), rng);
    max_ok = max_ok && got == expect && scan_score(risks) == got;
  }
  return {pins && boundary && max_ok,
          fmt::format("sex diff {:.12f}, age diff {:.12f}, 0.06 boundary {}, scan max {}", d_sex, d_age,
                      boundary ? "inclusive" : "WRONG", max_ok ? "ok" : "WRONG")};
}

// Minimum weighted SSE over every monotone step function whose steps fall
// between distinct scores, by enumerating block partitions.
std::vector<double> exhaustive_monotone(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  const std::size_t m = xs.size();
  std::vector<double> sum(m, 0.0), cnt(m, 0.0);
  auto idx = [&](double v) { return static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), v) - xs.begin()); };
  for (std::size_t i = 0; i < x.size(); ++i) sum[idx(x[i])] += y[i], cnt[idx(x[i])] += 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_level(m);
  for (std::uint32_t cuts = 0; cuts < (1u << (m - 1)); ++cuts) {
    std::vector<double> level(m);
    std::size_t start = 0;
    bool monotone = true;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      if (k + 1 < m && !((cuts >> k) & 1u)) continue;
      double s = 0, c = 0;
      for (std::size_t q = start; q <= k; ++q) s += sum[q], c += cnt[q];
      const double v = s / c;
      if (v < prev) monotone = false;
      prev = v;
      for (std::size_t q = start; q <= k; ++q) level[q] = v;
      start = k + 1;
    }
    if (!monotone) continue;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += (y[i] - level[idx(x[i])]) * (y[i] - level[idx(x[i])]);
    if (sse < best - 1e-15) best = sse, best_level = level;
  }
  std::vector<double> fit;
  for (double v : x) fit.push_back(best_level[idx(v)]);
  return fit;
}

Result criterion6() {
  using namespace fairaudit::calibration;
  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 9);

  // PAVA against exhaustive search, every size 1..8.
  double pava_worst = 0.0, mean_worst = 0.0;
  int instances = 0;
  for (int n = 1; n <= 8; ++n)
    for (int k = 0; k < 250; ++k, ++instances) {
      std::vector<double> x, y;
      for (int i = 0; i < n; ++i) {
        x.push_back(grid(rng) / 10.0);
        y.push_back(k % 2 ? static_cast<double>(u(rng) < 0.5) : u(rng));
      }
      const auto map = fit_isotonic(x, y);
      const auto expect = exhaustive_monotone(x, y);
      double fitted = 0, observed = 0;
      for (int i = 0; i < n; ++i) {
        pava_worst = std::max(pava_worst, std::abs(map.apply(x[i]) - expect[i]));
        fitted += map.apply(x[i]);
        observed += y[i];
      }
      mean_worst = std::max(mean_worst, std::abs(fitted - observed) / n);
    }

  // Gradient against central differences at random parameter points.
  std::vector<double> s;
  std::vector<int> lab;
  for (int i = 0; i < 500; ++i) {
    s.push_back(u(rng));
    lab.push_back(u(rng) < s.back());
  }
  double grad_worst = 0.0;
  std::uniform_real_distribution<double> par(-4.0, 4.0);
  for (int k = 0; k < 100; ++k) {
    const double a = par(rng), b = par(rng), h = 1e-5;
    const auto g = platt_gradient(a, b, s, lab);
    const double fa = (platt_objective(a + h, b, s, lab) - platt_objective(a - h, b, s, lab)) / (2 * h);
    const double fb = (platt_objective(a, b + h, s, lab) - platt_objective(a, b - h, s, lab)) / (2 * h);
    grad_worst = std::max(grad_worst, std::hypot(g[0] - fa, g[1] - fb) / std::hypot(g[0], g[1]));
  }

  // Recovery of a = 2, b = -1 from n = 1e5.
  std::vector<double> rs;
  std::vector<int> ry;
  for (int i = 0; i < 100000; ++i) {
    rs.push_back(u(rng));
    ry.push_back(u(rng) < 1.0 / (1.0 + std::exp(-(2.0 * rs.back() - 1.0))));
  }
  const auto fit = fit_platt(rs, ry);
  const bool recovered = std::abs(fit.a - 2.0) <= kPlattTol && std::abs(fit.b + 1.0) <= kPlattTol;

  return {pava_worst <= 1e-12 && mean_worst <= kMeanTol && grad_worst < kGradRelTol && recovered,
          fmt::format("PAVA vs exhaustive max diff {:.1e} over {} instances, grand-mean drift {:.1e}, "
                      "gradient rel err {:.1e}, Platt fit a={:.4f} b={:.4f}",
                      pava_worst, instances, mean_worst, grad_worst, fit.a, fit.b)};
}

// ---------------------------------------------------------------------------

// P(X <= k) for X ~ Binomial(n, p).
double binomial_cdf(int k, int n, double p) {
  double total = 0.0;
  for (int i = 0; i <= k; ++i)
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
                      (n - i) * std::log1p(-p));
  return total;
}

std::pair<int, int> binomial_band(int n, double p) {
  int lo = 0;
  while (lo < n && binomial_cdf(lo, n, p) <= kBinomialTail) ++lo;
  int hi = n;
  while (hi > 0 && 1.0 - binomial_cdf(hi - 1, n, p) <= kBinomialTail) --hi;
  return {lo, hi};
}

struct ScenarioTally {
  int designed = 0;
  int auroc_alarms = 0;
  std::map<std::string, int> outcomes;
};

Result criterion7() {
  const auto t0 = Clock::now();
  constexpr int kReplications = 100;
  constexpr std::uint64_t kBaseSeed = 700000;
  const std::string dir = std::string(FAIRAUDIT_SOURCE_DIR) + "/scenarios/";
  std::map<std::string, ScenarioTally> tally;
  for (const auto& name : synth::golden_scenario_names()) {
    const auto config = AuditConfig::load(dir + "audit_" + name + ".json");
    auto& t = tally[name];
    for (int r = 0; r < kReplications; ++r) {
      auto spec = synth::golden_scenario(name);
      spec.seed = kBaseSeed + static_cast<std::uint64_t>(r);
      auto cfg = config;
      cfg.options.bootstrap.seed = spec.seed;
      const auto report = run_audit(cfg, synth::generate(spec));
      const auto& f = report.findings.at(0);
      if (f.signal.metric != MetricKind::Auroc) throw ComputeError("first finding is not the AUROC signal");
      ++t.outcomes[std::string(outcome_name(f.outcome))];
      t.auroc_alarms += f.signal.disparity_found;
      bool ok = false;
      if (name == "null") {
        ok = f.outcome == Outcome::NoDisparity;
      } else if (name == "direct_bias") {
        ok = f.outcome == Outcome::UnexplainedDisparity && f.assessments.size() == 10 &&
             std::all_of(f.assessments.begin(), f.assessments.end(),
                         [](const auto& a) { return a.verdict == Verdict::NotConfounded; });
      } else {
        ok = f.outcome == Outcome::ConfoundedBy &&
             std::find(f.confounders.begin(), f.confounders.end(), *spec.score_factor) != f.confounders.end();
      }
      t.designed += ok;
    }
  }
  const double secs = seconds_since(t0);
  const auto [lo, hi] = binomial_band(kReplications, 0.05);
  const int alarms = tally["null"].auroc_alarms;
  bool pass = alarms >= lo && alarms <= hi && secs < kC7BudgetSec;
  std::string detail;
  for (const auto& name : synth::golden_scenario_names()) {
    const auto& t = tally[name];
    pass = pass && t.designed >= kDesignedRate * kReplications;
    detail += fmt::format("{} {}/{} designed (", name, t.designed, kReplications);
    bool first = true;
    for (const auto& [o, c] : t.outcomes) {
      detail += fmt::format("{}{} {}", first ? "" : ", ", o, c);
      first = false;
    }
    detail += "); ";
  }
  detail += fmt::format("null AUROC false alarms {}/{} (99% band [{}, {}]), {:.0f} s", alarms, kReplications, lo, hi,
                        secs);
  return {pass, detail};
}

// ---------------------------------------------------------------------------

Result criterion8() {
  std::mt19937_64 rng(8008);
  std::uniform_int_distribution<std::size_t> size(2, 300);
  int agree = 0, qualify = 0, maximal = 0, cohorts = 0;
  for (int k = 0; k < 1000; ++k, ++cohorts) {
    const auto s = k % 2 ? tied_sample(rng, size(rng)) : [&] {
      Sample c;
      std::normal_distribution<double> z(0, 1);
      const auto n = size(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const int y = i % 3 == 0;
        c.labels.push_back(y);
        c.scores.push_back(normal_cdf(z(rng) + y));
      }
      return c;
    }();
    double n_pos = 0, n_neg = 0;
    for (int y : s.labels) (y ? n_pos : n_neg) += 1;
    auto sens_at = [&](double t) {
      double hit = 0;
      for (std::size_t i = 0; i < s.scores.size(); ++i) hit += s.labels[i] == 1 && s.scores[i] >= t;
      return hit / n_pos;
    };
    auto spec_at = [&](double t) {
      double hit = 0;
      for (std::size_t i = 0; i < s.scores.size(); ++i) hit += s.labels[i] == 0 && s.scores[i] < t;
      return hit / n_neg;
    };
    // Brute force: the qualifying candidate with the highest specificity,
    // then the highest threshold among equals.
    double best_t = -1, best_spec = -1;
    for (double t : s.scores) {
      if (sens_at(t) < 0.90) continue;
      const double sp = spec_at(t);
      if (sp > best_spec || (sp == best_spec && t > best_t)) best_spec = sp, best_t = t;
    }
    const double got = resolve_threshold(s.scores, s.labels, Policy::target_sensitivity(0.90)).threshold;
    agree += got == best_t;
    qualify += sens_at(got) >= 0.90;
    maximal += spec_at(got) == best_spec;
  }
  return {agree == cohorts && qualify == cohorts && maximal == cohorts,
          fmt::format("{} cohorts: brute-force agreement {}, sensitivity >= 0.90 in {}, maximal specificity in {}",
                      cohorts, agree, qualify, maximal)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Result()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  int failures = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      fmt::print("criterion {}: FAIL unknown criterion\n", id);
      ++failures;
      continue;
    }
    Result r;
    try {
      r = criteria[static_cast<std::size_t>(id - 1)]();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    fmt::print("criterion {}: {} {}\n", id, r.pass ? "PASS" : "FAIL", r.detail);
    std::fflush(stdout);
    failures += !r.pass;
  }
  return failures == 0 ? 0 : 1;
}

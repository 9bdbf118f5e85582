#include "fairaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "fairaudit/error.hpp"
#include "fairaudit/synth.hpp"

namespace fairaudit {

namespace {

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t records = 0;

  void add(const ScanRecord& r, const std::string& model) {
    ++records;
    if (auto s = r.score(model)) {
      scores.push_back(*s);
      labels.push_back(r.label);
    }
  }

  GroupCounts counts() const {
    GroupCounts c;
    c.records = records;
    c.n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    c.n_neg = labels.size() - c.n_pos;
    return c;
  }
};

Metric metric_for(MetricKind kind, const std::optional<OperatingPoint>& op) {
  switch (kind) {
    case MetricKind::Auroc: return Metric::auroc();
    case MetricKind::Sensitivity: return Metric::sensitivity(op->threshold);
    case MetricKind::Specificity: return Metric::specificity(op->threshold);
  }
  return Metric::auroc();
}

DisparitySignal evaluate_pair(const Sample& a, const Sample& b, const std::string& model, const SplitRule& split,
                              MetricKind kind, const std::optional<OperatingPoint>& op,
                              const AuditOptions& options, const std::string& context) {
  DisparitySignal s;
  s.model = model;
  s.split = split;
  s.metric = kind;
  s.operating_point = op;
  s.counts_a = a.counts();
  s.counts_b = b.counts();
  const Metric metric = metric_for(kind, op);
  try {
    BootstrapOptions bo = options.bootstrap;
    bo.seed = derive_seed(options.bootstrap.seed, context + "/a");
    s.value_a = bootstrap_ci(metric, a.scores, a.labels, bo);
    bo.seed = derive_seed(options.bootstrap.seed, context + "/b");
    s.value_b = bootstrap_ci(metric, b.scores, b.labels, bo);
    if (kind == MetricKind::Auroc) {
      s.comparison = compare_auroc({s.value_a.point, s.counts_a.n_pos, s.counts_a.n_neg},
                                   {s.value_b.point, s.counts_b.n_pos, s.counts_b.n_neg}, options.alpha);
    } else {
      s.overlap = classify_overlap(s.value_a, s.value_b, options.convention);
    }
  } catch (const ComputeError& e) {
    throw ComputeError(context + ": " + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  }
  s.disparity_found = signal_fires(kind, s.comparison, s.overlap, options.alpha);
  return s;
}

std::string signal_context(const std::string& model, const SplitRule& split, MetricKind kind,
                           const std::optional<OperatingPoint>& op) {
  std::string ctx = fmt::format("model={}/split={}/metric={}", model, split.name, metric_name(kind));
  if (op) ctx += "/policy=" + op->policy.key();
  return ctx;
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

std::string rethrow_prefix(const std::string& ctx, const std::exception& e) { return ctx + ": " + e.what(); }

template <class F>
auto with_context(const std::string& ctx, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ComputeError& e) {
    throw ComputeError(rethrow_prefix(ctx, e));
  } catch (const ValidationError& e) {
    throw ValidationError(rethrow_prefix(ctx, e));
  }
}

}  // namespace

std::string DisparitySignal::context() const { return signal_context(model, split, metric, operating_point); }

bool signal_fires(MetricKind metric, const std::optional<AurocComparison>& comparison,
                  const std::optional<OverlapClass>& overlap, double alpha) {
  if (metric == MetricKind::Auroc) return comparison && comparison->p < alpha;
  return overlap && *overlap == OverlapClass::Disjoint;
}

std::vector<OperatingPoint> resolve_operating_points(const Cohort& cohort, const std::string& model,
                                                     std::span<const Policy> policies) {
  const auto [scores, labels] = cohort.scores_and_labels(model);
  std::vector<OperatingPoint> out;
  for (const auto& p : policies) {
    out.push_back(with_context(fmt::format("model={}/policy={}", model, p.key()),
                               [&] { return resolve_threshold(scores, labels, p); }));
  }
  return out;
}

std::vector<DisparitySignal> stage1(const Cohort& cohort, const std::string& model, const SplitRule& split,
                                    std::span<const OperatingPoint> operating_points,
                                    const AuditOptions& options) {
  if (!cohort.has_model(model)) throw ValidationError("cohort has no scores for model '" + model + "'");
  if (!cohort.has_column(split.attribute()))
    throw ValidationError("unknown attribute '" + split.attribute() + "' in split '" + split.name + "'");
  const SplitRule rule = resolve(split, cohort);
  Sample a, b;
  for (const auto& r : cohort.records()) {
    switch (assign(rule, r)) {
      case Side::A: a.add(r, model); break;
      case Side::B: b.add(r, model); break;
      case Side::Excluded: break;
    }
  }
  for (const auto& [sample, label] : {std::pair{&a, &rule.label_a}, std::pair{&b, &rule.label_b}}) {
    const GroupCounts c = sample->counts();
    if (c.n_pos == 0 || c.n_neg == 0)
      throw ComputeError(fmt::format("model={}/split={}: group '{}' has {} positives and {} negatives", model,
                                     rule.name, *label, c.n_pos, c.n_neg));
  }

  std::vector<DisparitySignal> out;
  out.push_back(evaluate_pair(a, b, model, rule, MetricKind::Auroc, std::nullopt, options,
                              signal_context(model, rule, MetricKind::Auroc, std::nullopt)));
  for (const auto& op : operating_points) {
    for (MetricKind kind : {MetricKind::Sensitivity, MetricKind::Specificity})
      out.push_back(evaluate_pair(a, b, model, rule, kind, op, options, signal_context(model, rule, kind, op)));
  }
  return out;
}

std::optional<bool> BinnedFactor::present(const ScanRecord& record) const {
  const Value* v = record.lookup(name);
  if (!v || is_missing(*v)) return std::nullopt;
  if (numeric) {
    auto x = as_number(*v);
    if (!x)
      throw ValidationError(fmt::format("scan '{}': factor '{}' = '{}' is not numeric", record.scan_id, name,
                                        to_string(*v)));
    return *x > threshold;
  }
  auto p = as_bool(*v);
  if (!p)
    throw ValidationError(fmt::format("scan '{}': factor '{}' = '{}' is not boolean", record.scan_id, name,
                                      to_string(*v)));
  return *p;
}

std::string BinnedFactor::present_label() const {
  return numeric ? fmt::format("> {:g}", threshold) : std::string("present");
}

BinnedFactor bin_factor(const Cohort& overall, const FactorSpec& spec) {
  if (!overall.has_column(spec.name)) throw ValidationError("unknown factor column '" + spec.name + "'");
  BinnedFactor f;
  f.name = spec.name;
  switch (spec.binning) {
    case FactorBinning::Boolean:
      return f;
    case FactorBinning::Threshold:
      f.numeric = true;
      f.threshold = spec.threshold;
      return f;
    case FactorBinning::Median:
      f.numeric = true;
      f.threshold = std::get<NumericThreshold>(median_split(overall, spec.name).kind).threshold;
      return f;
    case FactorBinning::Auto:
      break;
  }
  bool all_binary = true;
  std::vector<double> values;
  for (const auto& r : overall.records()) {
    const Value* v = r.lookup(spec.name);
    if (!v || is_missing(*v)) continue;
    if (std::holds_alternative<std::string>(*v))
      throw ValidationError(fmt::format("factor '{}' has categorical value '{}'; declare an explicit binning",
                                        spec.name, to_string(*v)));
    if (!as_bool(*v)) all_binary = false;
    values.push_back(*as_number(*v));
  }
  if (all_binary) return f;
  f.numeric = true;
  f.threshold = spec.name == "nodule_count" ? 1.0 : median(std::move(values));
  return f;
}

PrevalenceResult prevalence_disparities(const Cohort& cohort, const SplitRule& split,
                                        std::span<const BinnedFactor> factors) {
  const SplitRule rule = resolve(split, cohort);
  std::vector<Side> sides;
  sides.reserve(cohort.size());
  for (const auto& r : cohort.records()) sides.push_back(assign(rule, r));

  PrevalenceResult out;
  for (const auto& f : factors) {
    std::size_t n[2] = {0, 0};
    std::size_t present[2] = {0, 0};
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (sides[i] == Side::Excluded) continue;
      const int g = sides[i] == Side::A ? 0 : 1;
      auto p = f.present(cohort.records()[i]);
      if (!p) continue;
      ++n[g];
      present[g] += *p ? 1 : 0;
    }
    if (n[0] == 0 || n[1] == 0) {
      out.warnings.push_back(fmt::format("split={}: factor '{}' is missing for every record in group '{}'",
                                         rule.name, f.name, n[0] == 0 ? rule.label_a : rule.label_b));
      continue;
    }
    PrevalenceDisparity d;
    d.factor = f.name;
    d.present_label = f.present_label();
    d.n_a = n[0];
    d.n_b = n[1];
    d.pct_a = 100.0 * static_cast<double>(present[0]) / static_cast<double>(n[0]);
    d.pct_b = 100.0 * static_cast<double>(present[1]) / static_cast<double>(n[1]);
    d.gap = std::abs(d.pct_a - d.pct_b);
    out.ranking.push_back(std::move(d));
  }
  std::sort(out.ranking.begin(), out.ranking.end(), [](const auto& x, const auto& y) {
    if (x.gap != y.gap) return x.gap > y.gap;
    return x.factor < y.factor;
  });
  return out;
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::NotConfounded: return "NotConfounded";
    case Verdict::PotentialConfounder: return "PotentialConfounder";
    case Verdict::Indeterminate: return "Indeterminate";
  }
  return "";
}

void assign_verdict(ConfounderAssessment& assessment, const DisparitySignal& stage1_signal,
                    const AuditOptions& options) {
  assessment.reason.clear();
  const auto& p = assessment.present.signal;
  const auto& a = assessment.absent.signal;
  if (!p || !a) {
    assessment.verdict = Verdict::Indeterminate;
    assessment.reason = "insufficient-data";
    return;
  }
  const double g1 = stage1_signal.gap();
  auto persisted = [&](const DisparitySignal& s) { return s.disparity_found && sign(s.gap()) == sign(g1); };
  auto reduced = [&](const DisparitySignal& s) {
    return std::abs(s.gap()) < std::abs(g1) - options.reduction_margin;
  };
  if (persisted(*p) || persisted(*a)) {
    assessment.verdict = Verdict::NotConfounded;
  } else if (!p->disparity_found && !a->disparity_found && reduced(*p) && reduced(*a)) {
    assessment.verdict = Verdict::PotentialConfounder;
  } else {
    assessment.verdict = Verdict::Indeterminate;
    assessment.reason = (p->disparity_found || a->disparity_found) ? "reversed" : "not-reduced";
  }
}

std::vector<ConfounderAssessment> stage2(const Cohort& cohort, const DisparitySignal& signal,
                                         std::span<const BinnedFactor> factors, const AuditOptions& options) {
  if (!signal.disparity_found)
    throw ValidationError(signal.context() + ": stage 2 requires a signal that found a disparity");
  const SplitRule& rule = signal.split;
  std::vector<Side> sides;
  sides.reserve(cohort.size());
  for (const auto& r : cohort.records()) sides.push_back(assign(rule, r));

  std::vector<ConfounderAssessment> out;
  out.reserve(factors.size());
  for (const auto& f : factors) {
    const std::string ctx = signal.context() + "/factor=" + f.name;
    ConfounderAssessment as;
    as.factor = f;
    Sample present[2], absent[2];
    with_context(ctx, [&] {
      for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (sides[i] == Side::Excluded) continue;
        const int g = sides[i] == Side::A ? 0 : 1;
        const auto& r = cohort.records()[i];
        auto p = f.present(r);
        if (!p)
          ++(g == 0 ? as.missing_a : as.missing_b);
        else
          (*p ? present : absent)[g].add(r, signal.model);
      }
      return 0;
    });
    auto evaluate = [&](const Sample* s, SubsetEvaluation& into, const char* which) {
      into.counts_a = s[0].counts();
      into.counts_b = s[1].counts();
      const std::size_t k = options.min_class_count;
      if (into.counts_a.n_pos < k || into.counts_a.n_neg < k || into.counts_b.n_pos < k ||
          into.counts_b.n_neg < k)
        return;
      into.signal = evaluate_pair(s[0], s[1], signal.model, rule, signal.metric, signal.operating_point, options,
                                  ctx + "/" + which);
    };
    evaluate(present, as.present, "present");
    evaluate(absent, as.absent, "absent");
    assign_verdict(as, signal, options);
    out.push_back(std::move(as));
  }
  return out;
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::NoDisparity: return "NoDisparity";
    case Outcome::UnexplainedDisparity: return "UnexplainedDisparity";
    case Outcome::ConfoundedBy: return "ConfoundedBy";
    case Outcome::Inconclusive: return "Inconclusive";
  }
  return "";
}

Outcome classify_outcome(const DisparitySignal& signal, std::span<const ConfounderAssessment> assessments) {
  if (!signal.disparity_found) return Outcome::NoDisparity;
  const auto is = [](Verdict v) { return [v](const ConfounderAssessment& a) { return a.verdict == v; }; };
  if (std::any_of(assessments.begin(), assessments.end(), is(Verdict::PotentialConfounder)))
    return Outcome::ConfoundedBy;
  if (std::all_of(assessments.begin(), assessments.end(), is(Verdict::NotConfounded)))
    return Outcome::UnexplainedDisparity;
  return Outcome::Inconclusive;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

using nlohmann::json;

const json& require(const json& j, const std::string& at, const char* key) {
  if (!j.contains(key)) throw ConfigError(at + "/" + key, "required field is missing");
  return j[key];
}

double number_at(const json& j, const std::string& at) {
  if (!j.is_number()) throw ConfigError(at, "expected a number");
  return j.get<double>();
}

std::string string_at(const json& j, const std::string& at) {
  if (!j.is_string()) throw ConfigError(at, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> strings_at(const json& j, const std::string& at) {
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array()) throw ConfigError(at, "expected a string or an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(string_at(j[i], fmt::format("{}/{}", at, i)));
  return out;
}

bool side_is_low(const json& j, const std::string& at, bool fallback) {
  if (!j.contains("a")) return fallback;
  const auto s = string_at(j["a"], at + "/a");
  if (s == "low") return true;
  if (s == "high") return false;
  throw ConfigError(at + "/a", "expected \"low\" or \"high\"");
}

SplitRule split_from_json(const json& j, const std::string& at) {
  if (j.is_string()) {
    auto rule = find_builtin_rule(j.get<std::string>());
    if (!rule) throw ConfigError(at, "unknown built-in split '" + j.get<std::string>() + "'");
    return *rule;
  }
  if (!j.is_object()) throw ConfigError(at, "expected a split name or object");
  SplitRule rule;
  const std::string attribute = string_at(require(j, at, "attribute"), at + "/attribute");
  rule.name = j.contains("name") ? string_at(j["name"], at + "/name") : attribute;
  const std::string kind = string_at(require(j, at, "kind"), at + "/kind");
  if (kind == "categorical") {
    CategoricalPair c{attribute, strings_at(require(j, at, "a"), at + "/a"),
                      strings_at(require(j, at, "b"), at + "/b")};
    if (c.values_a.empty() || c.values_b.empty()) throw ConfigError(at, "both sides need at least one value");
    for (const auto& v : c.values_a)
      if (std::find(c.values_b.begin(), c.values_b.end(), v) != c.values_b.end())
        throw ConfigError(at + "/b", "value '" + v + "' appears on both sides");
    rule.label_a = fmt::format("{}", fmt::join(c.values_a, "/"));
    rule.label_b = fmt::format("{}", fmt::join(c.values_b, "/"));
    rule.kind = std::move(c);
  } else if (kind == "threshold") {
    NumericThreshold t;
    t.attribute = attribute;
    t.threshold = number_at(require(j, at, "threshold"), at + "/threshold");
    const std::string inclusive = j.contains("inclusive") ? string_at(j["inclusive"], at + "/inclusive") : "low";
    if (inclusive == "low")
      t.boundary = Boundary::LowInclusive;
    else if (inclusive == "high")
      t.boundary = Boundary::HighInclusive;
    else
      throw ConfigError(at + "/inclusive", "expected \"low\" or \"high\"");
    t.a_is_low = side_is_low(j, at, true);
    const std::string v = fmt::format("{:g}", t.threshold);
    const std::string low = (t.boundary == Boundary::LowInclusive ? "≤ " : "< ") + v;
    const std::string high = (t.boundary == Boundary::LowInclusive ? "> " : "≥ ") + v;
    rule.label_a = t.a_is_low ? low : high;
    rule.label_b = t.a_is_low ? high : low;
    rule.kind = t;
  } else if (kind == "median") {
    rule.kind = MedianSplit{attribute, side_is_low(j, at, true)};
  } else {
    throw ConfigError(at + "/kind", "unknown split kind '" + kind + "'");
  }
  if (j.contains("label_a")) rule.label_a = string_at(j["label_a"], at + "/label_a");
  if (j.contains("label_b")) rule.label_b = string_at(j["label_b"], at + "/label_b");
  return rule;
}

Policy policy_from_json(const json& j, const std::string& at) {
  if (j.is_string()) {
    try {
      return Policy::parse(j.get<std::string>());
    } catch (const ValidationError& e) {
      throw ConfigError(at, e.what());
    }
  }
  if (!j.is_object()) throw ConfigError(at, "expected a policy string or object");
  const std::string kind = string_at(require(j, at, "kind"), at + "/kind");
  Policy p;
  if (kind == "sensitivity" || kind == "specificity") {
    const double level = number_at(require(j, at, "level"), at + "/level");
    if (!(level > 0.0 && level <= 1.0)) throw ConfigError(at + "/level", "target must lie in (0, 1]");
    p = kind == "sensitivity" ? Policy::target_sensitivity(level) : Policy::target_specificity(level);
  } else if (kind == "fixed") {
    p = Policy::fixed(number_at(require(j, at, "threshold"), at + "/threshold"));
  } else {
    throw ConfigError(at + "/kind", "unknown policy kind '" + kind + "'");
  }
  return p;
}

FactorSpec factor_from_json(const json& j, const std::string& at) {
  if (j.is_string()) return {j.get<std::string>(), FactorBinning::Auto, 0.0};
  if (!j.is_object()) throw ConfigError(at, "expected a factor name or object");
  FactorSpec f;
  f.name = string_at(require(j, at, "name"), at + "/name");
  const std::string bin = j.contains("bin") ? string_at(j["bin"], at + "/bin") : "auto";
  if (bin == "auto") {
    f.binning = FactorBinning::Auto;
  } else if (bin == "boolean") {
    f.binning = FactorBinning::Boolean;
  } else if (bin == "median") {
    f.binning = FactorBinning::Median;
  } else if (bin == "threshold") {
    f.binning = FactorBinning::Threshold;
    f.threshold = number_at(require(j, at, "threshold"), at + "/threshold");
  } else {
    throw ConfigError(at + "/bin", "unknown binning '" + bin + "'");
  }
  return f;
}

}  // namespace

AuditConfig AuditConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("", "audit config must be a JSON object");
  if (j.contains("format_version") && j["format_version"] != 1)
    throw ConfigError("/format_version", "unsupported version");
  AuditConfig c;
  auto resolve_path = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  const auto& cohort = require(j, "", "cohort");
  if (cohort.is_object()) {
    c.scenario_path = resolve_path(string_at(require(cohort, "/cohort", "scenario"), "/cohort/scenario"));
  } else {
    c.cohort_path = resolve_path(string_at(cohort, "/cohort"));
  }
  if (j.contains("schema")) {
    const auto& s = j["schema"];
    try {
      c.schema = s.is_string() ? Schema::load(resolve_path(s.get<std::string>())) : Schema::from_json(s);
    } catch (const ConfigError& e) {
      throw ConfigError("/schema" + e.pointer(), e.what());
    }
  }
  auto array = [&](const char* key) -> const json& {
    static const json empty = json::array();
    if (!j.contains(key)) return empty;
    if (!j[key].is_array()) throw ConfigError(std::string("/") + key, "expected an array");
    return j[key];
  };
  const auto& models = require(j, "", "models");
  if (!models.is_array()) throw ConfigError("/models", "expected an array");
  for (std::size_t i = 0; i < models.size(); ++i)
    c.models.push_back(string_at(models[i], fmt::format("/models/{}", i)));
  const auto& splits = array("splits");
  for (std::size_t i = 0; i < splits.size(); ++i)
    c.splits.push_back(split_from_json(splits[i], fmt::format("/splits/{}", i)));
  const auto& policies = array("policies");
  for (std::size_t i = 0; i < policies.size(); ++i)
    c.policies.push_back(policy_from_json(policies[i], fmt::format("/policies/{}", i)));
  const auto& factors = array("factors");
  for (std::size_t i = 0; i < factors.size(); ++i)
    c.factors.push_back(factor_from_json(factors[i], fmt::format("/factors/{}", i)));

  auto& o = c.options;
  if (j.contains("alpha")) {
    o.alpha = number_at(j["alpha"], "/alpha");
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("/alpha", "alpha must lie in (0, 1)");
  }
  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    if (!b.is_object()) throw ConfigError("/bootstrap", "expected an object");
    if (b.contains("n")) {
      if (!b["n"].is_number_integer() || b["n"].get<long long>() < 1)
        throw ConfigError("/bootstrap/n", "expected a positive integer");
      o.bootstrap.n_resamples = b["n"].get<int>();
    }
    if (b.contains("seed")) {
      if (!b["seed"].is_number_unsigned()) throw ConfigError("/bootstrap/seed", "expected a non-negative integer");
      o.bootstrap.seed = b["seed"].get<std::uint64_t>();
    }
    if (b.contains("level")) {
      o.bootstrap.level = number_at(b["level"], "/bootstrap/level");
      if (!(o.bootstrap.level > 0.0 && o.bootstrap.level < 1.0))
        throw ConfigError("/bootstrap/level", "level must lie in (0, 1)");
    }
    if (b.contains("stratified")) {
      if (!b["stratified"].is_boolean()) throw ConfigError("/bootstrap/stratified", "expected a boolean");
      o.bootstrap.stratified = b["stratified"].get<bool>();
    }
    if (b.contains("workers")) {
      if (!b["workers"].is_number_unsigned() || b["workers"].get<unsigned>() < 1)
        throw ConfigError("/bootstrap/workers", "expected a positive integer");
      o.bootstrap.workers = b["workers"].get<unsigned>();
    }
  }
  if (j.contains("top_k")) {
    if (!j["top_k"].is_number_unsigned()) throw ConfigError("/top_k", "expected a non-negative integer");
    o.top_k = j["top_k"].get<std::size_t>();
  }
  if (j.contains("min_class_count")) {
    if (!j["min_class_count"].is_number_unsigned() || j["min_class_count"].get<std::size_t>() < 1)
      throw ConfigError("/min_class_count", "expected a positive integer");
    o.min_class_count = j["min_class_count"].get<std::size_t>();
  }
  if (j.contains("reduction_margin")) {
    o.reduction_margin = number_at(j["reduction_margin"], "/reduction_margin");
    if (o.reduction_margin < 0.0) throw ConfigError("/reduction_margin", "margin must be non-negative");
  }
  if (j.contains("overlap_convention")) {
    const auto s = string_at(j["overlap_convention"], "/overlap_convention");
    if (s == "reference")
      o.convention = OverlapConvention::Reference;
    else if (s == "symmetric")
      o.convention = OverlapConvention::Symmetric;
    else
      throw ConfigError("/overlap_convention", "expected \"reference\" or \"symmetric\"");
  }
  if (j.contains("derive_bmi")) {
    if (!j["derive_bmi"].is_boolean()) throw ConfigError("/derive_bmi", "expected a boolean");
    c.derive_bmi = j["derive_bmi"].get<bool>();
  }
  return c;
}

AuditConfig AuditConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j, path.parent_path());
}

AuditReport run_audit(const AuditConfig& config, const Cohort& input) {
  const bool add_bmi = config.derive_bmi && input.has_column("weight") && input.has_column("height") &&
                       !input.has_column("bmi");
  const Cohort cohort = add_bmi ? with_bmi(input) : input;

  AuditReport report;
  report.cohort_source = cohort.provenance().source;
  report.cohort = cohort.summary();
  report.options = config.options;
  report.models = config.models;
  report.policies = config.policies;

  for (std::size_t i = 0; i < config.models.size(); ++i)
    if (!cohort.has_model(config.models[i]))
      throw ConfigError(fmt::format("/models/{}", i), "cohort has no score column for '" + config.models[i] + "'");
  for (std::size_t i = 0; i < config.splits.size(); ++i)
    if (!cohort.has_column(config.splits[i].attribute()))
      throw ConfigError(fmt::format("/splits/{}", i),
                        "cohort has no column '" + config.splits[i].attribute() + "'");
  std::vector<BinnedFactor> factors;
  for (std::size_t i = 0; i < config.factors.size(); ++i) {
    if (!cohort.has_column(config.factors[i].name))
      throw ConfigError(fmt::format("/factors/{}", i), "cohort has no column '" + config.factors[i].name + "'");
    factors.push_back(with_context("factor=" + config.factors[i].name,
                                   [&] { return bin_factor(cohort, config.factors[i]); }));
  }

  for (const auto& model : config.models)
    report.operating_points[model] = resolve_operating_points(cohort, model, config.policies);

  for (const auto& split : config.splits) {
    SplitSummary summary;
    summary.rule = with_context("split=" + split.name, [&] { return resolve(split, cohort); });
    for (const auto& r : cohort.records()) {
      switch (assign(summary.rule, r)) {
        case Side::A: ++summary.n_a; break;
        case Side::B: ++summary.n_b; break;
        case Side::Excluded: ++summary.excluded; break;
      }
    }
    if (!factors.empty()) {
      auto prevalence = prevalence_disparities(cohort, summary.rule, factors);
      summary.prevalence = std::move(prevalence.ranking);
      for (auto& w : prevalence.warnings) report.warnings.push_back(std::move(w));
    }
    report.splits.push_back(std::move(summary));
  }

  for (const auto& model : config.models) {
    for (const auto& summary : report.splits) {
      std::vector<BinnedFactor> top;
      for (const auto& d : summary.prevalence) {
        if (top.size() >= config.options.top_k) break;
        top.push_back(*std::find_if(factors.begin(), factors.end(), [&](const auto& f) { return f.name == d.factor; }));
      }
      for (auto& signal : stage1(cohort, model, summary.rule, report.operating_points[model], config.options)) {
        AuditFinding finding;
        if (signal.disparity_found) finding.assessments = stage2(cohort, signal, top, config.options);
        finding.outcome = classify_outcome(signal, finding.assessments);
        if (finding.outcome == Outcome::ConfoundedBy)
          for (const auto& a : finding.assessments)
            if (a.verdict == Verdict::PotentialConfounder) finding.confounders.push_back(a.factor.name);
        finding.signal = std::move(signal);
        report.findings.push_back(std::move(finding));
      }
    }
  }
  return report;
}

AuditReport run_audit(const AuditConfig& config) {
  if (config.scenario_path) return run_audit(config, synth::generate(synth::ScenarioSpec::load(*config.scenario_path)));
  const Cohort cohort = load_cohort(config.cohort_path, config.schema.value_or(Schema{}));
  return run_audit(config, cohort);
}

std::string split_title(const SplitRule& rule) { return rule.label_a + " vs " + rule.label_b; }

}  // namespace fairaudit

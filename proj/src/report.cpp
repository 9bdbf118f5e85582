#include "fairaudit/report.hpp"

#include <fstream>

#include <fmt/format.h>

#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"

namespace fairaudit::report {

namespace {

using nlohmann::json;

constexpr const char* kCsvPreamble = "# format_version=1\n";

std::string num(double x) { return csv::format_double(x); }

std::string policy_key(const DisparitySignal& s) { return s.operating_point ? s.operating_point->policy.key() : ""; }

std::string evidence(const DisparitySignal& s) {
  if (s.comparison) {
    const std::string p = format_p(s.comparison->p);
    return p.front() == '<' ? "p " + p : "p = " + p;
  }
  if (s.overlap) return std::string(overlap_name(*s.overlap));
  return "";
}

std::string percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? "n/a" : fmt::format("{:.0f}", 100.0 * static_cast<double>(part) / static_cast<double>(whole));
}

// First finding matching the cell, or nullptr.
const AuditFinding* find_signal(const AuditReport& r, const std::string& model, const std::string& split,
                                MetricKind metric, const std::string& policy) {
  for (const auto& f : r.findings)
    if (f.signal.model == model && f.signal.split.name == split && f.signal.metric == metric &&
        policy_key(f.signal) == policy)
      return &f;
  return nullptr;
}

json estimate_json(const IntervalEstimate& e) {
  return {{"point", e.point}, {"lo", e.lo},         {"hi", e.hi},          {"level", e.level},
          {"n_resamples", e.n_resamples}, {"n_defined", e.n_defined}, {"seed", e.seed}};
}

json counts_json(const GroupCounts& c) { return {{"records", c.records}, {"n_pos", c.n_pos}, {"n_neg", c.n_neg}}; }

json split_json(const SplitRule& rule) {
  json j{{"name", rule.name}, {"attribute", rule.attribute()}, {"label_a", rule.label_a}, {"label_b", rule.label_b}};
  if (const auto* c = std::get_if<CategoricalPair>(&rule.kind)) {
    j["kind"] = "categorical";
    j["a"] = c->values_a;
    j["b"] = c->values_b;
  } else if (const auto* t = std::get_if<NumericThreshold>(&rule.kind)) {
    j["kind"] = "threshold";
    j["threshold"] = t->threshold;
    j["inclusive"] = t->boundary == Boundary::LowInclusive ? "low" : "high";
    j["a"] = t->a_is_low ? "low" : "high";
  } else {
    j["kind"] = "median";
  }
  return j;
}

json signal_json(const DisparitySignal& s) {
  json j{{"model", s.model},
         {"split", s.split.name},
         {"metric", metric_name(s.metric)},
         {"value_a", estimate_json(s.value_a)},
         {"value_b", estimate_json(s.value_b)},
         {"counts_a", counts_json(s.counts_a)},
         {"counts_b", counts_json(s.counts_b)},
         {"disparity_found", s.disparity_found}};
  if (s.operating_point)
    j["operating_point"] = {{"policy", s.operating_point->policy.key()}, {"threshold", s.operating_point->threshold}};
  if (s.comparison) {
    const auto& c = *s.comparison;
    j["comparison"] = {{"se_a", c.se_a}, {"se_b", c.se_b}, {"z", c.z},
                       {"p", c.p},       {"alpha", c.alpha}, {"degenerate", c.degenerate}};
  }
  if (s.overlap) j["overlap"] = overlap_name(*s.overlap);
  return j;
}

json subset_json(const SubsetEvaluation& s) {
  json j{{"counts_a", counts_json(s.counts_a)}, {"counts_b", counts_json(s.counts_b)}};
  j["signal"] = s.signal ? signal_json(*s.signal) : json(nullptr);
  return j;
}

void add_subset_rows(ReportTable& t, const ConfounderAssessment& a, const AuditFinding& f) {
  for (const auto& [name, subset] : {std::pair{"present", &a.present}, std::pair{"absent", &a.absent}}) {
    const auto& s = *subset;
    std::vector<std::string> row{a.factor.name + " " + a.factor.present_label(), name};
    row.push_back(fmt::format("{}", s.counts_a.n_pos));
    row.push_back(fmt::format("{}", s.counts_a.n_neg));
    row.push_back(percent(s.counts_a.records, f.signal.counts_a.records));
    row.push_back(s.signal ? format_estimate(s.signal->value_a) : "n/a");
    row.push_back(fmt::format("{}", s.counts_b.n_pos));
    row.push_back(fmt::format("{}", s.counts_b.n_neg));
    row.push_back(percent(s.counts_b.records, f.signal.counts_b.records));
    row.push_back(s.signal ? format_estimate(s.signal->value_b) : "n/a");
    row.push_back(s.signal ? evidence(*s.signal) : "insufficient data");
    row.push_back(std::string(verdict_name(a.verdict)) + (a.reason.empty() ? "" : " (" + a.reason + ")"));
    t.rows.push_back(std::move(row));
  }
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string format_estimate(const IntervalEstimate& e) {
  return fmt::format("{:.2f} ({:.2f}, {:.2f})", e.point, e.lo, e.hi);
}

std::vector<ReportTable> build_tables(const AuditReport& r) {
  std::vector<ReportTable> tables;

  ReportTable auroc{TableKind::Auroc, "AUROC by subgroup", {"Split", "Group"}, {}};
  for (const auto& m : r.models) {
    auroc.columns.push_back(m + " AUROC");
    auroc.columns.push_back(m + " p");
  }
  for (const auto& s : r.splits) {
    std::vector<std::string> row_a{s.rule.name, s.rule.label_a};
    std::vector<std::string> row_b{"", s.rule.label_b};
    for (const auto& m : r.models) {
      const AuditFinding* f = find_signal(r, m, s.rule.name, MetricKind::Auroc, "");
      row_a.push_back(f ? format_estimate(f->signal.value_a) : "");
      row_a.push_back(f && f->signal.comparison ? format_p(f->signal.comparison->p) : "");
      row_b.push_back(f ? format_estimate(f->signal.value_b) : "");
      row_b.push_back("");
    }
    auroc.rows.push_back(std::move(row_a));
    auroc.rows.push_back(std::move(row_b));
  }
  tables.push_back(std::move(auroc));

  for (MetricKind metric : {MetricKind::Sensitivity, MetricKind::Specificity}) {
    ReportTable t{metric == MetricKind::Sensitivity ? TableKind::Sensitivity : TableKind::Specificity,
                  metric == MetricKind::Sensitivity ? "Sensitivity by subgroup" : "Specificity by subgroup",
                  {"Split", "Group"},
                  {}};
    for (const auto& m : r.models)
      for (const auto& p : r.policies) t.columns.push_back(m + " " + p.label());
    for (const auto& s : r.splits) {
      std::vector<std::string> row_a{s.rule.name, s.rule.label_a};
      std::vector<std::string> row_b{"", s.rule.label_b};
      for (const auto& m : r.models) {
        for (const auto& p : r.policies) {
          const AuditFinding* f = find_signal(r, m, s.rule.name, metric, p.key());
          row_a.push_back(f ? format_estimate(f->signal.value_a) : "");
          row_b.push_back(f ? format_estimate(f->signal.value_b) + std::string(asterisks(*f->signal.overlap)) : "");
        }
      }
      t.rows.push_back(std::move(row_a));
      t.rows.push_back(std::move(row_b));
    }
    tables.push_back(std::move(t));
  }

  for (const auto& s : r.splits) {
    ReportTable t{TableKind::Prevalence,
                  "Risk-factor prevalence: " + split_title(s.rule),
                  {"Rank", "Factor", s.rule.label_a + " %", s.rule.label_b + " %", "Gap"},
                  {}};
    for (std::size_t i = 0; i < s.prevalence.size(); ++i) {
      const auto& d = s.prevalence[i];
      t.rows.push_back({fmt::format("{}", i + 1), d.factor + " " + d.present_label, fmt::format("{:.1f}", d.pct_a),
                        fmt::format("{:.1f}", d.pct_b), fmt::format("{:.1f}", d.gap)});
    }
    tables.push_back(std::move(t));
  }

  for (const auto& f : r.findings) {
    if (f.assessments.empty()) continue;
    const auto& sig = f.signal;
    std::string title = fmt::format("Confounder analysis: {}, {}, {}", sig.model, split_title(sig.split),
                                    metric_name(sig.metric));
    if (sig.operating_point) title += " at " + sig.operating_point->policy.label();
    const std::string& la = sig.split.label_a;
    const std::string& lb = sig.split.label_b;
    ReportTable t{TableKind::Confounder,
                  title,
                  {"Factor", "Subset", la + " Mal", la + " Ben", la + " Total %", la, lb + " Mal", lb + " Ben",
                   lb + " Total %", lb, "Evidence", "Verdict"},
                  {}};
    for (const auto& a : f.assessments) add_subset_rows(t, a, f);
    tables.push_back(std::move(t));
  }

  ReportTable findings{TableKind::Findings,
                       "Findings",
                       {"Model", "Split", "Metric", "Policy", "Evidence", "Disparity", "Outcome", "Confounders",
                        "Annotation"},
                       {}};
  for (const auto& f : r.findings) {
    const auto& s = f.signal;
    findings.rows.push_back({s.model, split_title(s.split), std::string(metric_name(s.metric)),
                             s.operating_point ? s.operating_point->policy.label() : "", evidence(s),
                             s.disparity_found ? "yes" : "no", std::string(outcome_name(f.outcome)),
                             fmt::format("{}", fmt::join(f.confounders, ", ")), f.human_annotation});
  }
  tables.push_back(std::move(findings));
  return tables;
}

std::string to_markdown(const ReportTable& t) {
  std::string out = "| ";
  for (const auto& c : t.columns) out += md_cell(c) + " | ";
  out.pop_back();
  out += "\n|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& row : t.rows) {
    out += "| ";
    for (const auto& c : row) out += md_cell(c) + " | ";
    out.pop_back();
    out += "\n";
  }
  return out;
}

std::string render_markdown(const AuditReport& r) {
  std::string out = fmt::format("<!-- format_version={} -->\n# Fairness audit report\n\n", AuditReport::kFormatVersion);
  out += fmt::format("Cohort `{}`: {} scans, {} participants, {} malignant, {} benign.\n\n", r.cohort_source,
                     r.cohort.scans, r.cohort.participants, r.cohort.malignant, r.cohort.benign);
  const auto& b = r.options.bootstrap;
  out += fmt::format(
      "Alpha {:g}. Intervals: {:g}% {} percentile bootstrap, {} resamples, seed {}. "
      "Sensitivity/specificity disparities require non-intersecting intervals (`**`); `*` marks a point "
      "estimate outside the other group's interval.\n",
      r.options.alpha, b.level * 100.0, b.stratified ? "stratified" : "unstratified", b.n_resamples, b.seed);

  if (!r.operating_points.empty()) {
    out += "\n## Operating points\n\n| Model | Policy | Threshold |\n|---|---|---|\n";
    for (const auto& m : r.models)
      for (const auto& op : r.operating_points.at(m))
        out += fmt::format("| {} | {} | {} |\n", md_cell(m), op.policy.label(), num(op.threshold));
  }
  for (const auto& t : build_tables(r)) out += "\n## " + t.title + "\n\n" + to_markdown(t);
  if (!r.warnings.empty()) {
    out += "\n## Warnings\n\n";
    for (const auto& w : r.warnings) out += "- " + w + "\n";
  }
  return out;
}

json to_json(const AuditReport& r) {
  json j;
  j["format_version"] = AuditReport::kFormatVersion;
  j["cohort"] = {{"source", r.cohort_source},
                 {"scans", r.cohort.scans},
                 {"participants", r.cohort.participants},
                 {"malignant", r.cohort.malignant},
                 {"benign", r.cohort.benign}};
  const auto& o = r.options;
  j["options"] = {{"alpha", o.alpha},
                  {"bootstrap",
                   {{"n", o.bootstrap.n_resamples},
                    {"seed", o.bootstrap.seed},
                    {"level", o.bootstrap.level},
                    {"stratified", o.bootstrap.stratified}}},
                  {"overlap_convention", o.convention == OverlapConvention::Reference ? "reference" : "symmetric"},
                  {"min_class_count", o.min_class_count},
                  {"reduction_margin", o.reduction_margin},
                  {"top_k", o.top_k}};
  j["models"] = r.models;
  j["policies"] = json::array();
  for (const auto& p : r.policies) j["policies"].push_back(p.key());
  j["operating_points"] = json::object();
  for (const auto& [m, ops] : r.operating_points) {
    j["operating_points"][m] = json::array();
    for (const auto& op : ops) j["operating_points"][m].push_back({{"policy", op.policy.key()}, {"threshold", op.threshold}});
  }
  j["splits"] = json::array();
  for (const auto& s : r.splits) {
    json sj = split_json(s.rule);
    sj["n_a"] = s.n_a;
    sj["n_b"] = s.n_b;
    sj["excluded"] = s.excluded;
    sj["prevalence"] = json::array();
    for (const auto& d : s.prevalence)
      sj["prevalence"].push_back({{"factor", d.factor},
                                  {"present_label", d.present_label},
                                  {"pct_a", d.pct_a},
                                  {"pct_b", d.pct_b},
                                  {"gap", d.gap},
                                  {"n_a", d.n_a},
                                  {"n_b", d.n_b}});
    j["splits"].push_back(std::move(sj));
  }
  j["findings"] = json::array();
  for (const auto& f : r.findings) {
    json fj;
    fj["signal"] = signal_json(f.signal);
    fj["assessments"] = json::array();
    for (const auto& a : f.assessments) {
      fj["assessments"].push_back({{"factor", a.factor.name},
                                   {"present_label", a.factor.present_label()},
                                   {"present", subset_json(a.present)},
                                   {"absent", subset_json(a.absent)},
                                   {"missing_a", a.missing_a},
                                   {"missing_b", a.missing_b},
                                   {"verdict", verdict_name(a.verdict)},
                                   {"reason", a.reason}});
    }
    fj["outcome"] = outcome_name(f.outcome);
    fj["confounders"] = f.confounders;
    fj["human_annotation"] = f.human_annotation;
    j["findings"].push_back(std::move(fj));
  }
  j["warnings"] = r.warnings;
  return j;
}

std::string auroc_csv(const AuditReport& r) {
  std::string out = kCsvPreamble;
  out += "model,split,label_a,label_b,n_pos_a,n_neg_a,auroc_a,lo_a,hi_a,n_pos_b,n_neg_b,auroc_b,lo_b,hi_b,se_a,se_b,z,p,"
         "disparity_found\n";
  for (const auto& f : r.findings) {
    const auto& s = f.signal;
    if (s.metric != MetricKind::Auroc) continue;
    const auto& c = *s.comparison;
    out += csv::join_row({s.model, s.split.name, s.split.label_a, s.split.label_b, fmt::format("{}", s.counts_a.n_pos),
                          fmt::format("{}", s.counts_a.n_neg), num(s.value_a.point), num(s.value_a.lo),
                          num(s.value_a.hi), fmt::format("{}", s.counts_b.n_pos), fmt::format("{}", s.counts_b.n_neg),
                          num(s.value_b.point), num(s.value_b.lo), num(s.value_b.hi), num(c.se_a), num(c.se_b),
                          num(c.z), num(c.p), s.disparity_found ? "1" : "0"}) +
           "\n";
  }
  return out;
}

std::string sensspec_csv(const AuditReport& r, MetricKind metric) {
  std::string out = kCsvPreamble;
  out += "model,split,policy,threshold,label_a,label_b,value_a,lo_a,hi_a,value_b,lo_b,hi_b,overlap,marker,"
         "disparity_found\n";
  for (const auto& f : r.findings) {
    const auto& s = f.signal;
    if (s.metric != metric) continue;
    out += csv::join_row({s.model, s.split.name, s.operating_point->policy.key(), num(s.operating_point->threshold),
                          s.split.label_a, s.split.label_b, num(s.value_a.point), num(s.value_a.lo),
                          num(s.value_a.hi), num(s.value_b.point), num(s.value_b.lo), num(s.value_b.hi),
                          std::string(overlap_name(*s.overlap)), std::string(asterisks(*s.overlap)),
                          s.disparity_found ? "1" : "0"}) +
           "\n";
  }
  return out;
}

std::string prevalence_csv(const AuditReport& r) {
  std::string out = kCsvPreamble;
  out += "split,rank,factor,present_label,pct_a,pct_b,gap,n_a,n_b\n";
  for (const auto& s : r.splits)
    for (std::size_t i = 0; i < s.prevalence.size(); ++i) {
      const auto& d = s.prevalence[i];
      out += csv::join_row({s.rule.name, fmt::format("{}", i + 1), d.factor, d.present_label, num(d.pct_a),
                            num(d.pct_b), num(d.gap), fmt::format("{}", d.n_a), fmt::format("{}", d.n_b)}) +
             "\n";
    }
  return out;
}

std::string confounders_csv(const AuditReport& r) {
  std::string out = kCsvPreamble;
  out += "model,split,metric,policy,factor,present_label,subset,n_pos_a,n_neg_a,records_a,n_pos_b,n_neg_b,records_b,"
         "value_a,lo_a,hi_a,value_b,lo_b,hi_b,p,overlap,disparity_found,verdict,reason\n";
  for (const auto& f : r.findings) {
    for (const auto& a : f.assessments) {
      for (const auto& [name, subset] : {std::pair{"present", &a.present}, std::pair{"absent", &a.absent}}) {
        const auto& sub = *subset;
        std::vector<std::string> row{f.signal.model, f.signal.split.name, std::string(metric_name(f.signal.metric)),
                                     policy_key(f.signal), a.factor.name, a.factor.present_label(), name,
                                     fmt::format("{}", sub.counts_a.n_pos), fmt::format("{}", sub.counts_a.n_neg),
                                     fmt::format("{}", sub.counts_a.records), fmt::format("{}", sub.counts_b.n_pos),
                                     fmt::format("{}", sub.counts_b.n_neg), fmt::format("{}", sub.counts_b.records)};
        if (sub.signal) {
          const auto& s = *sub.signal;
          for (double x : {s.value_a.point, s.value_a.lo, s.value_a.hi, s.value_b.point, s.value_b.lo, s.value_b.hi})
            row.push_back(num(x));
          row.push_back(s.comparison ? num(s.comparison->p) : "");
          row.push_back(s.overlap ? std::string(overlap_name(*s.overlap)) : "");
          row.push_back(s.disparity_found ? "1" : "0");
        } else {
          row.insert(row.end(), 9, "");
        }
        row.push_back(std::string(verdict_name(a.verdict)));
        row.push_back(a.reason);
        out += csv::join_row(row) + "\n";
      }
    }
  }
  return out;
}

std::string findings_csv(const AuditReport& r) {
  std::string out = kCsvPreamble;
  out += "model,split,metric,policy,disparity_found,outcome,confounders,human_annotation\n";
  for (const auto& f : r.findings) {
    const auto& s = f.signal;
    out += csv::join_row({s.model, s.split.name, std::string(metric_name(s.metric)), policy_key(s),
                          s.disparity_found ? "1" : "0", std::string(outcome_name(f.outcome)),
                          fmt::format("{}", fmt::join(f.confounders, ";")), f.human_annotation}) +
           "\n";
  }
  return out;
}

std::vector<RenderedFile> render_all(const AuditReport& r) {
  return {{"report.md", render_markdown(r)},
          {"report.json", to_json(r).dump(2) + "\n"},
          {"auroc.csv", auroc_csv(r)},
          {"sensitivity.csv", sensspec_csv(r, MetricKind::Sensitivity)},
          {"specificity.csv", sensspec_csv(r, MetricKind::Specificity)},
          {"prevalence.csv", prevalence_csv(r)},
          {"confounders.csv", confounders_csv(r)},
          {"findings.csv", findings_csv(r)}};
}

void write_report(const AuditReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ComputeError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  for (const auto& f : render_all(r)) {
    const auto path = dir / f.name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputeError("cannot write " + path.string());
    out << f.content;
    if (!out) throw ComputeError("write failed for " + path.string());
  }
}

}  // namespace fairaudit::report

#include "fairaudit/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fairaudit/audit.hpp"
#include "fairaudit/calibration.hpp"
#include "fairaudit/cohort.hpp"
#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/pancan.hpp"
#include "fairaudit/report.hpp"
#include "fairaudit/stats.hpp"
#include "fairaudit/synth.hpp"

namespace fairaudit {

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir;
};

struct CohortArgs {
  std::string path;
  std::string schema;
  std::string model;

  Cohort load() const {
    return load_cohort(path, schema.empty() ? Schema{} : Schema::load(schema));
  }
};

void add_cohort_options(CLI::App* cmd, CohortArgs& args) {
  cmd->add_option("--cohort", args.path, "Cohort CSV")->required();
  cmd->add_option("--schema", args.schema, "Schema JSON mapping CSV headers to roles");
  cmd->add_option("--model", args.model, "Score column")->required();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot write " + path.string());
  out << text;
}

AurocGroup parse_group(const std::string& text) {
  const auto fields = csv::split_row(text);
  if (fields.size() != 3) throw ValidationError("expected auc,n_pos,n_neg but got '" + text + "'");
  auto auc = csv::parse_double(fields[0]);
  auto pos = csv::parse_double(fields[1]);
  auto neg = csv::parse_double(fields[2]);
  if (!auc || !pos || !neg || *pos < 0 || *neg < 0 || *pos != std::floor(*pos) || *neg != std::floor(*neg))
    throw ValidationError("expected auc,n_pos,n_neg but got '" + text + "'");
  return {*auc, static_cast<std::size_t>(*pos), static_cast<std::size_t>(*neg)};
}

bool parse_flag(const std::string& cell, const std::string& column, std::size_t line) {
  auto v = as_bool(parse_value(cell));
  if (!v) throw ValidationError(fmt::format("line {}: column '{}' = '{}' is not boolean", line, column, cell));
  return *v;
}

// One row per nodule; scans are scored by their most suspicious nodule.
std::string score_nodules(const std::filesystem::path& input, const pancan::ModelDefinition& model) {
  std::ifstream in(input);
  if (!in) throw ValidationError("cannot open " + input.string());
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw ValidationError(input.string() + ": empty file");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"scan_id", "participant_id", "sex", "age", "family_history", "emphysema", "size_mm",
                               "type", "upper_lobe", "spiculation"})
    if (!col.count(required)) throw ValidationError(fmt::format("{}: missing column '{}'", input.string(), required));

  struct Row {
    std::string scan_id, participant_id;
    pancan::NoduleInput nodule;
    pancan::ParticipantInput participant;
  };
  std::vector<Row> rows;
  std::map<std::string, int> per_scan;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::size_t line = reader.line_number();
    if (fields.size() != header.size())
      throw ValidationError(fmt::format("{}: line {}: expected {} fields, got {}", input.string(), line,
                                        header.size(), fields.size()));
    auto cell = [&](const char* name) -> const std::string& { return fields[col[name]]; };
    auto number = [&](const char* name) {
      auto x = csv::parse_double(cell(name));
      if (!x) throw ValidationError(fmt::format("line {}: column '{}' = '{}' is not numeric", line, name, cell(name)));
      return *x;
    };
    Row r;
    r.scan_id = cell("scan_id");
    r.participant_id = cell("participant_id");
    try {
      r.participant.sex = pancan::parse_sex(cell("sex"));
      r.nodule.type = pancan::parse_nodule_type(cell("type"));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("line {}: {}", line, e.what()));
    }
    r.participant.age = number("age");
    r.participant.family_history = parse_flag(cell("family_history"), "family_history", line);
    r.participant.emphysema = parse_flag(cell("emphysema"), "emphysema", line);
    r.nodule.size_mm = number("size_mm");
    r.nodule.upper_lobe = parse_flag(cell("upper_lobe"), "upper_lobe", line);
    r.nodule.spiculation = parse_flag(cell("spiculation"), "spiculation", line);
    ++per_scan[r.scan_id];
    rows.push_back(std::move(r));
  }

  std::map<std::string, std::pair<std::string, std::vector<double>>> scans;
  std::vector<std::string> order;
  for (auto& r : rows) {
    r.nodule.count_in_scan = per_scan[r.scan_id];
    auto [it, inserted] = scans.try_emplace(r.scan_id, r.participant_id, std::vector<double>{});
    if (inserted) order.push_back(r.scan_id);
    it->second.second.push_back(pancan::pancan2b_risk(r.nodule, r.participant, model));
  }
  std::string out = "# format_version=1\nscan_id,participant_id,n_nodules,score,ilst_band\n";
  for (const auto& id : order) {
    const auto& [participant, risks] = scans[id];
    const double s = pancan::scan_score(risks);
    out += csv::join_row({id, participant, fmt::format("{}", risks.size()), csv::format_double(s),
                          std::string(pancan::band_name(pancan::classify_ilst(s)))}) +
           "\n";
  }
  return out;
}

void print_or_write(std::ostream& out, const std::string& path, const std::string& text) {
  if (path.empty())
    out << text;
  else
    write_text(path, text);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subgroup fairness audit for lung-cancer risk models", "fairaudit"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (overrides the config/scenario seed)");
  app.add_option("--config", g.config, "Audit configuration JSON");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  // audit run
  auto* audit = app.add_subcommand("audit", "Two-stage subgroup audit")->require_subcommand(1);
  auto* audit_run = audit->add_subcommand("run", "Run the audit described by --config");
  unsigned workers = 0;
  audit_run->add_option("--workers", workers, "Bootstrap worker threads");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Model performance metrics")->require_subcommand(1);
  CohortArgs m_auroc, m_roc, m_thr;
  auto* metrics_auroc = metrics->add_subcommand("auroc", "AUROC with a bootstrap interval");
  add_cohort_options(metrics_auroc, m_auroc);
  int n_boot = 1000;
  metrics_auroc->add_option("--bootstrap", n_boot, "Resamples (0 disables the interval)");
  auto* metrics_roc = metrics->add_subcommand("roc", "ROC curve points as CSV");
  add_cohort_options(metrics_roc, m_roc);
  std::string roc_out;
  metrics_roc->add_option("--out", roc_out, "Output CSV (default: stdout)");
  auto* metrics_thr = metrics->add_subcommand("threshold", "Resolve an operating point");
  add_cohort_options(metrics_thr, m_thr);
  std::string policy_text;
  metrics_thr->add_option("--policy", policy_text, "sensitivity:0.9, specificity:0.9 or fixed:0.06")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Statistical tests")->require_subcommand(1);
  auto* compare = stats->add_subcommand("compare-auroc", "Hanley-McNeil z-test for independent AUROCs");
  std::string group_a, group_b;
  double alpha = 0.05;
  compare->add_option("--a", group_a, "auc,n_pos,n_neg")->required();
  compare->add_option("--b", group_b, "auc,n_pos,n_neg")->required();
  compare->add_option("--alpha", alpha, "Significance level");

  // pancan
  auto* pancan_cmd = app.add_subcommand("pancan", "PanCan2b nodule risk")->require_subcommand(1);
  auto* pancan_score = pancan_cmd->add_subcommand("score", "Score nodules and aggregate per scan");
  std::string nodules, model_path, pancan_out;
  bool dump_model = false;
  pancan_score->add_option("--input", nodules, "Nodule CSV");
  pancan_score->add_option("--model", model_path, "Model definition JSON (default: built-in)");
  pancan_score->add_option("--out", pancan_out, "Output CSV (default: stdout)");
  pancan_score->add_flag("--dump-model", dump_model, "Print the model definition and exit");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Probability calibration")->require_subcommand(1);
  auto* cal_fit = calibrate->add_subcommand("fit", "Fit a calibrator on labelled scores");
  CohortArgs c_fit, c_apply;
  add_cohort_options(cal_fit, c_fit);
  std::string method = "platt", cal_out;
  cal_fit->add_option("--method", method, "platt or isotonic")->check(CLI::IsMember({"platt", "isotonic"}));
  cal_fit->add_option("--out", cal_out, "Calibrator JSON (default: stdout)");
  auto* cal_apply = calibrate->add_subcommand("apply", "Add a calibrated score column");
  add_cohort_options(cal_apply, c_apply);
  std::string calibrator_path, apply_out;
  cal_apply->add_option("--calibrator", calibrator_path, "Calibrator JSON")->required();
  cal_apply->add_option("--out", apply_out, "Output cohort CSV")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic cohorts")->require_subcommand(1);
  auto* synth_gen = synth_cmd->add_subcommand("generate", "Generate a cohort from a scenario");
  std::string spec_path, scenario_name, synth_out;
  auto* spec_opt = synth_gen->add_option("--spec", spec_path, "Scenario JSON");
  synth_gen->add_option("--scenario", scenario_name, "Built-in scenario: null, direct_bias, confounded")
      ->excludes(spec_opt);
  synth_gen->add_option("--out", synth_out, "Output cohort CSV")->required();
  auto* synth_show = synth_cmd->add_subcommand("show", "Print a built-in scenario as JSON");
  std::string show_name;
  synth_show->add_option("--scenario", show_name, "null, direct_bias or confounded")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }

  try {
    if (audit_run->parsed()) {
      if (g.config.empty()) throw ValidationError("audit run requires --config");
      AuditConfig config = AuditConfig::load(g.config);
      if (g.seed) config.options.bootstrap.seed = *g.seed;
      if (workers > 0) config.options.bootstrap.workers = workers;
      const AuditReport r = run_audit(config);
      const std::filesystem::path dir = g.out_dir.empty() ? std::string("audit_out") : g.out_dir;
      report::write_report(r, dir);
      std::size_t fired = 0;
      for (const auto& f : r.findings) fired += f.signal.disparity_found ? 1 : 0;
      out << fmt::format("{} signals, {} disparities; report written to {}\n", r.findings.size(), fired,
                         dir.string());
    } else if (metrics_auroc->parsed()) {
      const auto [scores, labels] = m_auroc.load().scores_and_labels(m_auroc.model);
      if (n_boot <= 0) {
        out << fmt::format("auroc={}\n", csv::format_double(auroc(scores, labels)));
      } else {
        BootstrapOptions bo;
        bo.n_resamples = n_boot;
        bo.seed = g.seed.value_or(0);
        const auto e = bootstrap_ci(Metric::auroc(), scores, labels, bo);
        out << fmt::format("auroc={} lo={} hi={} ({})\n", csv::format_double(e.point), csv::format_double(e.lo),
                           csv::format_double(e.hi), report::format_estimate(e));
      }
    } else if (metrics_roc->parsed()) {
      const auto [scores, labels] = m_roc.load().scores_and_labels(m_roc.model);
      std::ostringstream csv_text;
      write_roc_csv(roc_curve(scores, labels), csv_text);
      std::string path = roc_out;
      if (path.empty() && !g.out_dir.empty())
        path = (std::filesystem::path(g.out_dir) / ("roc_" + m_roc.model + ".csv")).string();
      print_or_write(out, path, csv_text.str());
    } else if (metrics_thr->parsed()) {
      const auto [scores, labels] = m_thr.load().scores_and_labels(m_thr.model);
      const auto op = resolve_threshold(scores, labels, Policy::parse(policy_text));
      const auto ss = sens_spec_at(scores, labels, op.threshold);
      out << fmt::format("threshold={} sensitivity={} specificity={}\n", csv::format_double(op.threshold),
                         ss.sensitivity ? csv::format_double(*ss.sensitivity) : "n/a",
                         ss.specificity ? csv::format_double(*ss.specificity) : "n/a");
    } else if (compare->parsed()) {
      const auto c = compare_auroc(parse_group(group_a), parse_group(group_b), alpha);
      out << fmt::format("auroc_a={} se_a={} auroc_b={} se_b={} z={} p={} ({}) significant={}\n",
                         csv::format_double(c.auroc_a), csv::format_double(c.se_a), csv::format_double(c.auroc_b),
                         csv::format_double(c.se_b), csv::format_double(c.z), csv::format_double(c.p),
                         format_p(c.p), c.significant() ? "yes" : "no");
    } else if (pancan_score->parsed()) {
      const auto model =
          model_path.empty() ? pancan::ModelDefinition::default_pancan2b() : pancan::ModelDefinition::load(model_path);
      if (dump_model) {
        out << model.to_json().dump(2) << "\n";
      } else {
        if (nodules.empty()) throw ValidationError("pancan score requires --input");
        print_or_write(out, pancan_out, score_nodules(nodules, model));
      }
    } else if (cal_fit->parsed()) {
      const auto [scores, labels] = c_fit.load().scores_and_labels(c_fit.model);
      calibration::Calibrator cal;
      if (method == "platt")
        cal = calibration::fit_platt(scores, labels);
      else
        cal = calibration::fit_isotonic(std::span<const double>(scores), std::span<const int>(labels));
      print_or_write(out, cal_out, calibration::to_json(cal).dump(2) + "\n");
    } else if (cal_apply->parsed()) {
      const Cohort cohort = c_apply.load();
      if (!cohort.has_model(c_apply.model)) throw ValidationError("cohort has no scores for '" + c_apply.model + "'");
      const auto cal = calibration::load_calibrator(calibrator_path);
      const std::string name = c_apply.model + "_calibrated";
      auto columns = cohort.columns();
      columns.models.push_back(name);
      std::vector<ScanRecord> records = cohort.records();
      for (auto& r : records)
        if (auto s = r.score(c_apply.model)) r.scores[name] = calibration::apply_calibration(cal, *s);
      std::ostringstream text;
      write_cohort(Cohort(std::move(records), std::move(columns), cohort.provenance()), text);
      write_text(apply_out, text.str());
    } else if (synth_show->parsed()) {
      out << synth::golden_scenario(show_name).to_json().dump(2) << "\n";
    } else if (synth_gen->parsed()) {
      if (spec_path.empty() == scenario_name.empty())
        throw ValidationError("synth generate needs exactly one of --spec or --scenario");
      auto spec = spec_path.empty() ? synth::golden_scenario(scenario_name) : synth::ScenarioSpec::load(spec_path);
      if (g.seed) spec.seed = *g.seed;
      std::ostringstream text;
      write_cohort(synth::generate(spec), text);
      write_text(synth_out, text.str());
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace fairaudit

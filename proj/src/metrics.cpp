#include "fairaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"

namespace fairaudit {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValidationError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  for (int l : labels)
    if (l != 0 && l != 1) throw ValidationError(fmt::format("label {} is not 0 or 1", l));
}

/// Sample sorted by ascending score with tie groups marked. Metrics are
/// evaluated on per-observation multiplicities so a bootstrap resample never
/// needs to be materialised or re-sorted.
class SortedSample {
 public:
  SortedSample(std::span<const double> scores, std::span<const int> labels) {
    check_sizes(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    scores_.reserve(n);
    labels_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      scores_.push_back(scores[i]);
      labels_.push_back(labels[i]);
      (labels[i] == 1 ? positives_ : negatives_).push_back(k);
      if (k == 0 || scores_[k] != scores_[k - 1]) group_starts_.push_back(k);
    }
    group_starts_.push_back(n);
  }

  std::size_t size() const noexcept { return scores_.size(); }
  const std::vector<std::size_t>& positives() const noexcept { return positives_; }
  const std::vector<std::size_t>& negatives() const noexcept { return negatives_; }

  std::optional<double> evaluate(const Metric& metric, std::span<const std::uint32_t> weights) const {
    switch (metric.kind) {
      case MetricKind::Auroc:
        return weighted_auroc(weights);
      case MetricKind::Sensitivity:
        return weighted_rate(weights, 1, metric.threshold);
      case MetricKind::Specificity:
        return weighted_rate(weights, 0, metric.threshold);
    }
    return std::nullopt;
  }

  // Index of the first observation with score >= t.
  std::size_t cut(double t) const {
    return static_cast<std::size_t>(std::lower_bound(scores_.begin(), scores_.end(), t) - scores_.begin());
  }

 private:
  std::optional<double> weighted_auroc(std::span<const std::uint32_t> w) const {
    double neg_below = 0.0;
    double credit = 0.0;
    double pos_total = 0.0;
    if (group_starts_.size() == scores_.size() + 1) {
      // No ties: every group is a single observation.
      for (std::size_t k = 0; k < scores_.size(); ++k) {
        if (labels_[k] == 1) {
          credit += w[k] * neg_below;
          pos_total += w[k];
        } else {
          neg_below += w[k];
        }
      }
      if (pos_total == 0.0 || neg_below == 0.0) return std::nullopt;
      return credit / (pos_total * neg_below);
    }
    for (std::size_t g = 0; g + 1 < group_starts_.size(); ++g) {
      double pos = 0.0;
      double neg = 0.0;
      for (std::size_t k = group_starts_[g]; k < group_starts_[g + 1]; ++k)
        (labels_[k] == 1 ? pos : neg) += w[k];
      credit += pos * (neg_below + 0.5 * neg);
      neg_below += neg;
      pos_total += pos;
    }
    if (pos_total == 0.0 || neg_below == 0.0) return std::nullopt;
    return credit / (pos_total * neg_below);
  }

  // Sensitivity (cls=1): share of weighted positives with score >= t.
  // Specificity (cls=0): share of weighted negatives with score < t.
  std::optional<double> weighted_rate(std::span<const std::uint32_t> w, int cls, double t) const {
    const std::size_t cut = this->cut(t);
    double below = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < scores_.size(); ++k) {
      if (labels_[k] != cls) continue;
      total += w[k];
      if (k < cut) below += w[k];
    }
    if (total == 0.0) return std::nullopt;
    return cls == 1 ? (total - below) / total : below / total;
  }

  std::vector<double> scores_;
  std::vector<int> labels_;
  std::vector<std::size_t> positives_;
  std::vector<std::size_t> negatives_;
  std::vector<std::size_t> group_starts_;
};

// Unbiased draw from [0, n) (Lemire's multiply-shift with rejection).
std::size_t bounded(std::mt19937_64& engine, std::size_t n) {
  const auto range = static_cast<std::uint64_t>(n);
  unsigned __int128 m = static_cast<unsigned __int128>(engine()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t floor = -range % range;
    while (low < floor) {
      m = static_cast<unsigned __int128>(engine()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  SortedSample sample(scores, labels);
  if (sample.positives().empty() || sample.negatives().empty())
    throw ComputeError(fmt::format("AUROC undefined: {} positives, {} negatives",
                                   sample.positives().size(), sample.negatives().size()));
  const std::vector<std::uint32_t> ones(sample.size(), 1);
  return *sample.evaluate(Metric::auroc(), ones);
}

double RocCurve::trapezoid_area() const {
  double area = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k) {
    const auto& p = points[k - 1];
    const auto& q = points[k];
    area += (p.fpr - q.fpr) * (p.tpr + q.tpr) * 0.5;
  }
  return area;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) sorted.emplace_back(scores[i], labels[i]);
  std::sort(sorted.begin(), sorted.end());
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw ComputeError(fmt::format("ROC undefined: {} positives, {} negatives", n_pos, n_neg));

  RocCurve curve;
  double pos_below = 0.0;
  double neg_below = 0.0;
  std::size_t k = 0;
  while (k < sorted.size()) {
    const double t = sorted[k].first;
    curve.points.push_back({t, (n_neg - neg_below) / n_neg, (n_pos - pos_below) / n_pos});
    for (; k < sorted.size() && sorted[k].first == t; ++k)
      (sorted[k].second == 1 ? pos_below : neg_below) += 1.0;
  }
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  curve.auroc = auroc(scores, labels);
  return curve;
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "# format_version=1\n";
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points)
    out << csv::format_double(p.threshold) << ',' << csv::format_double(p.fpr) << ','
        << csv::format_double(p.tpr) << '\n';
}

SensSpec sens_spec_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels);
  if (scores.empty()) throw ComputeError("sensitivity/specificity of an empty sample");
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool positive = scores[i] >= threshold;
    if (labels[i] == 1) (positive ? tp : fn)++;
    else (positive ? fp : tn)++;
  }
  SensSpec out;
  if (tp + fn > 0) out.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (tn + fp > 0) out.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
  return out;
}

Policy Policy::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw ValidationError(fmt::format("policy '{}' must look like kind:value", text));
  const auto kind = text.substr(0, colon);
  const auto value = csv::parse_double(text.substr(colon + 1));
  if (!value) throw ValidationError(fmt::format("policy '{}' has a non-numeric value", text));
  if (kind == "sensitivity") return target_sensitivity(*value);
  if (kind == "specificity") return target_specificity(*value);
  if (kind == "fixed") return fixed(*value);
  throw ValidationError(fmt::format("unknown policy kind '{}'", kind));
}

std::string Policy::key() const {
  switch (kind) {
    case PolicyKind::TargetSensitivity: return fmt::format("sensitivity:{:g}", value);
    case PolicyKind::TargetSpecificity: return fmt::format("specificity:{:g}", value);
    case PolicyKind::FixedThreshold: return fmt::format("fixed:{:g}", value);
  }
  return {};
}

std::string Policy::label() const {
  switch (kind) {
    case PolicyKind::TargetSensitivity: return fmt::format("{:g}% Overall Sensitivity", value * 100.0);
    case PolicyKind::TargetSpecificity: return fmt::format("{:g}% Overall Specificity", value * 100.0);
    case PolicyKind::FixedThreshold: return fmt::format("Fixed Threshold ({:g})", value);
  }
  return {};
}

OperatingPoint resolve_threshold(std::span<const double> scores, std::span<const int> labels,
                                 const Policy& policy) {
  check_sizes(scores, labels);
  if (policy.kind == PolicyKind::FixedThreshold) {
    if (!std::isfinite(policy.value)) throw ValidationError("fixed threshold must be finite");
    return {policy, policy.value};
  }
  if (!(policy.value > 0.0 && policy.value <= 1.0))
    throw ValidationError(fmt::format("policy target {} outside (0, 1]", policy.value));

  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) sorted.emplace_back(scores[i], labels[i]);
  std::sort(sorted.begin(), sorted.end());
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n_neg = static_cast<double>(labels.size()) - n_pos;
  const bool by_sens = policy.kind == PolicyKind::TargetSensitivity;
  if ((by_sens ? n_pos : n_neg) == 0)
    throw ComputeError(fmt::format("cannot resolve '{}': no {} in sample", policy.key(),
                                   by_sens ? "positives" : "negatives"));

  // Walk distinct scores upwards; pos_below/neg_below count scores strictly
  // below the candidate.
  std::optional<double> chosen;
  double pos_below = 0.0;
  double neg_below = 0.0;
  std::size_t k = 0;
  while (k < sorted.size()) {
    const double t = sorted[k].first;
    if (by_sens) {
      if ((n_pos - pos_below) / n_pos >= policy.value) chosen = t;
      else break;
    } else if (neg_below / n_neg >= policy.value) {
      chosen = t;
      break;
    }
    for (; k < sorted.size() && sorted[k].first == t; ++k)
      (sorted[k].second == 1 ? pos_below : neg_below) += 1.0;
  }
  if (!chosen)
    throw ComputeError(fmt::format("operating point '{}' is unattainable on this sample", policy.key()));
  return {policy, *chosen};
}

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::Auroc: return "AUROC";
    case MetricKind::Sensitivity: return "Sensitivity";
    case MetricKind::Specificity: return "Specificity";
  }
  return "";
}

std::optional<double> evaluate(const Metric& metric, std::span<const double> scores,
                               std::span<const int> labels) {
  SortedSample sample(scores, labels);
  const std::vector<std::uint32_t> ones(sample.size(), 1);
  return sample.evaluate(metric, ones);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view context) {
  // FNV-1a
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : context) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return derive_seed(master, h);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ComputeError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalEstimate bootstrap_ci(const Metric& metric, std::span<const double> scores,
                              std::span<const int> labels, const BootstrapOptions& options) {
  if (options.n_resamples < 1) throw ValidationError("bootstrap needs at least one resample");
  if (!(options.level > 0.0 && options.level < 1.0))
    throw ValidationError(fmt::format("confidence level {} outside (0, 1)", options.level));
  const SortedSample sample(scores, labels);
  const std::size_t n = sample.size();
  const std::vector<std::uint32_t> ones(n, 1);
  const auto point = sample.evaluate(metric, ones);
  if (!point)
    throw ComputeError(fmt::format("{} undefined on sample ({} positives, {} negatives)",
                                   metric_name(metric.kind), sample.positives().size(),
                                   sample.negatives().size()));

  const auto resamples = static_cast<std::size_t>(options.n_resamples);
  std::vector<std::optional<double>> values(resamples);
  // A stratified sensitivity/specificity resample only depends on how many
  // of the class draws land at or above the threshold, which is exactly
  // Binomial(class size, share at or above).
  const bool one_class = options.stratified && metric.kind != MetricKind::Auroc;
  const auto& pool = metric.kind == MetricKind::Sensitivity ? sample.positives() : sample.negatives();
  const std::size_t cut = sample.cut(metric.threshold);
  const auto pool_above = static_cast<std::size_t>(
      pool.end() - std::lower_bound(pool.begin(), pool.end(), cut));
  const double share_above =
      pool.empty() ? 0.0 : static_cast<double>(pool_above) / static_cast<double>(pool.size());
  auto run = [&](std::size_t first, std::size_t stride) {
    std::vector<std::uint32_t> weights(one_class ? 0 : n);
    for (std::size_t i = first; i < resamples; i += stride) {
      std::mt19937_64 engine(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
      if (one_class) {
        if (pool.empty()) continue;
        std::binomial_distribution<long long> hits(static_cast<long long>(pool.size()), share_above);
        const auto above = hits(engine);
        const double frac = static_cast<double>(above) / static_cast<double>(pool.size());
        values[i] = metric.kind == MetricKind::Sensitivity ? frac : 1.0 - frac;
        continue;
      }
      std::fill(weights.begin(), weights.end(), 0u);
      auto draw_from = [&](const std::vector<std::size_t>& from, std::size_t count) {
        if (from.empty()) return;
        for (std::size_t d = 0; d < count; ++d) ++weights[from[bounded(engine, from.size())]];
      };
      if (options.stratified) {
        draw_from(sample.positives(), sample.positives().size());
        draw_from(sample.negatives(), sample.negatives().size());
      } else {
        for (std::size_t d = 0; d < n; ++d) ++weights[bounded(engine, n)];
      }
      values[i] = sample.evaluate(metric, weights);
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(resamples)));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  }

  std::vector<double> defined;
  defined.reserve(resamples);
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  const double undefined_fraction =
      1.0 - static_cast<double>(defined.size()) / static_cast<double>(resamples);
  if (undefined_fraction > 0.5)
    throw ComputeError(fmt::format("{} undefined on {:.1f}% of bootstrap resamples",
                                   metric_name(metric.kind), undefined_fraction * 100.0));
  std::sort(defined.begin(), defined.end());
  const double tail = (1.0 - options.level) / 2.0;
  IntervalEstimate est;
  est.point = *point;
  est.lo = quantile_sorted(defined, tail);
  est.hi = quantile_sorted(defined, 1.0 - tail);
  est.level = options.level;
  est.n_resamples = options.n_resamples;
  est.n_defined = static_cast<int>(defined.size());
  est.seed = options.seed;
  return est;
}

}  // namespace fairaudit

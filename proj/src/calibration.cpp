#include "fairaudit/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "fairaudit/error.hpp"

namespace fairaudit::calibration {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Targets {
  double pos = 1.0;
  double neg = 0.0;
};

Targets make_targets(std::span<const int> labels, bool smooth) {
  if (!smooth) return {};
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n_neg = static_cast<double>(labels.size()) - n_pos;
  return {(n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)};
}

void check(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValidationError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  for (int l : labels)
    if (l != 0 && l != 1) throw ValidationError(fmt::format("label {} is not 0 or 1", l));
}

double objective(double a, double b, std::span<const double> s, std::span<const int> y, Targets t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = a * s[i] + b;
    sum += softplus(z) - (y[i] ? t.pos : t.neg) * z;
  }
  return sum / static_cast<double>(s.size());
}

}  // namespace

double platt_objective(double a, double b, std::span<const double> scores, std::span<const int> labels,
                       bool smooth_targets) {
  check(scores, labels);
  return objective(a, b, scores, labels, make_targets(labels, smooth_targets));
}

std::array<double, 2> platt_gradient(double a, double b, std::span<const double> scores,
                                     std::span<const int> labels, bool smooth_targets) {
  check(scores, labels);
  const Targets t = make_targets(labels, smooth_targets);
  double ga = 0.0;
  double gb = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double r = sigmoid(a * scores[i] + b) - (labels[i] ? t.pos : t.neg);
    ga += r * scores[i];
    gb += r;
  }
  const auto n = static_cast<double>(scores.size());
  return {ga / n, gb / n};
}

PlattParams fit_platt(std::span<const double> scores, std::span<const int> labels,
                      const PlattOptions& options) {
  check(scores, labels);
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw ComputeError(fmt::format("Platt scaling needs both classes ({} pos, {} neg)", n_pos, n_neg));
  const Targets t = make_targets(labels, options.smooth_targets);
  const auto n = static_cast<double>(scores.size());

  PlattParams p;
  p.a = 0.0;
  p.b = std::log((n_pos + 1.0) / (n_neg + 1.0));
  double f = objective(p.a, p.b, scores, labels, t);

  for (p.iterations = 0; p.iterations < options.max_iter; ++p.iterations) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      const double q = sigmoid(p.a * s + p.b);
      const double r = q - (labels[i] ? t.pos : t.neg);
      const double w = q * (1.0 - q);
      ga += r * s;
      gb += r;
      haa += w * s * s;
      hab += w * s;
      hbb += w;
    }
    ga /= n, gb /= n, haa /= n, hab /= n, hbb /= n;
    if (std::hypot(ga, gb) < options.tol) {
      p.converged = true;
      return p;
    }

    // Shift the Hessian until it is comfortably positive definite.
    double shift = 0.0;
    double det = haa * hbb - hab * hab;
    const double scale = std::max({haa, hbb, 1e-300});
    while (!(haa + shift > 0.0 && det > 1e-12 * scale * scale)) {
      shift = shift == 0.0 ? 1e-10 * scale + 1e-300 : shift * 10.0;
      det = (haa + shift) * (hbb + shift) - hab * hab;
    }
    const double da = -((hbb + shift) * ga - hab * gb) / det;
    const double db = -(-hab * ga + (haa + shift) * gb) / det;

    double step = 1.0;
    bool accepted = false;
    while (step >= 1e-10) {
      const double na = p.a + step * da;
      const double nb = p.b + step * db;
      const double nf = objective(na, nb, scores, labels, t);
      if (nf < f) {
        p.a = na;
        p.b = nb;
        f = nf;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent possible at machine precision: stationary up to rounding.
      const auto g = platt_gradient(p.a, p.b, scores, labels, options.smooth_targets);
      p.converged = std::hypot(g[0], g[1]) < std::max(options.tol, 1e-8);
      return p;
    }
  }
  const auto g = platt_gradient(p.a, p.b, scores, labels, options.smooth_targets);
  p.converged = std::hypot(g[0], g[1]) < options.tol;
  return p;
}

double IsotonicMap::apply(double score) const {
  if (breakpoints.empty()) throw ComputeError("empty isotonic map");
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), score,
                             [](double s, const auto& bp) { return s < bp.first; });
  if (it == breakpoints.begin()) return breakpoints.front().second;
  return std::prev(it)->second;
}

IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const double> targets) {
  if (scores.size() != targets.size())
    throw ValidationError(fmt::format("{} scores but {} targets", scores.size(), targets.size()));
  if (scores.empty()) throw ValidationError("isotonic fit needs at least one sample");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });

  struct Block {
    double first_score;
    double sum;
    double weight;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < order.size();) {
    // Equal scores form one starting block.
    Block b{scores[order[k]], 0.0, 0.0};
    for (; k < order.size() && scores[order[k]] == b.first_score; ++k) {
      b.sum += targets[order[k]];
      b.weight += 1.0;
    }
    blocks.push_back(b);
    // Equal means are pooled too, so the map has no redundant steps.
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().weight += top.weight;
    }
  }
  IsotonicMap map;
  map.breakpoints.reserve(blocks.size());
  for (const auto& b : blocks) map.breakpoints.emplace_back(b.first_score, b.mean());
  return map;
}

IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> targets(labels.begin(), labels.end());
  return fit_isotonic(scores, std::span<const double>(targets));
}

double apply_calibration(const Calibrator& calibrator, double score) {
  if (const auto* p = std::get_if<PlattParams>(&calibrator)) return sigmoid(p->a * score + p->b);
  return std::get<IsotonicMap>(calibrator).apply(score);
}

nlohmann::json to_json(const Calibrator& calibrator) {
  nlohmann::json j;
  j["format_version"] = 1;
  if (const auto* p = std::get_if<PlattParams>(&calibrator)) {
    j["method"] = "platt";
    j["a"] = p->a;
    j["b"] = p->b;
    j["converged"] = p->converged;
    j["iterations"] = p->iterations;
  } else {
    j["method"] = "isotonic";
    j["breakpoints"] = nlohmann::json::array();
    for (const auto& [s, v] : std::get<IsotonicMap>(calibrator).breakpoints)
      j["breakpoints"].push_back({s, v});
  }
  return j;
}

Calibrator calibrator_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "calibration artifact must be a JSON object");
  if (!j.contains("method") || !j["method"].is_string()) throw ConfigError("/method", "expected a string");
  const auto method = j["method"].get<std::string>();
  if (method == "platt") {
    PlattParams p;
    if (!j.contains("a") || !j["a"].is_number()) throw ConfigError("/a", "expected a number");
    if (!j.contains("b") || !j["b"].is_number()) throw ConfigError("/b", "expected a number");
    p.a = j["a"].get<double>();
    p.b = j["b"].get<double>();
    p.converged = j.value("converged", true);
    p.iterations = j.value("iterations", 0);
    return p;
  }
  if (method == "isotonic") {
    if (!j.contains("breakpoints") || !j["breakpoints"].is_array() || j["breakpoints"].empty())
      throw ConfigError("/breakpoints", "expected a non-empty array");
    IsotonicMap m;
    for (std::size_t i = 0; i < j["breakpoints"].size(); ++i) {
      const auto& bp = j["breakpoints"][i];
      if (!bp.is_array() || bp.size() != 2 || !bp[0].is_number() || !bp[1].is_number())
        throw ConfigError(fmt::format("/breakpoints/{}", i), "expected [score, value]");
      m.breakpoints.emplace_back(bp[0].get<double>(), bp[1].get<double>());
      if (i > 0 && (m.breakpoints[i].first <= m.breakpoints[i - 1].first ||
                    m.breakpoints[i].second < m.breakpoints[i - 1].second))
        throw ConfigError(fmt::format("/breakpoints/{}", i), "breakpoints must be increasing");
    }
    return m;
  }
  throw ConfigError("/method", "unknown method '" + method + "'");
}

Calibrator load_calibrator(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open calibration artifact " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return calibrator_from_json(j);
}

}  // namespace fairaudit::calibration

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

namespace fairaudit::calibration {

// Calibrated probability = sigmoid(a * score + b).
struct PlattParams {
  double a = 1.0;
  double b = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct PlattOptions {
  int max_iter = 100;
  // Convergence when the gradient norm of the mean cross-entropy drops below this.
  double tol = 1e-10;
  // Platt's smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2) instead of 1/0.
  bool smooth_targets = true;
};

// Mean cross-entropy of sigmoid(a*s + b) against the (possibly smoothed) targets.
double platt_objective(double a, double b, std::span<const double> scores,
                       std::span<const int> labels, bool smooth_targets = true);
std::array<double, 2> platt_gradient(double a, double b, std::span<const double> scores,
                                     std::span<const int> labels, bool smooth_targets = true);

/// Damped Newton on the mean cross-entropy. Each accepted step decreases the
/// objective; the Hessian is shifted towards the identity when it is not
/// safely positive definite. Throws ComputeError unless both classes occur.
PlattParams fit_platt(std::span<const double> scores, std::span<const int> labels,
                      const PlattOptions& options = {});

/// Monotone step function. breakpoints[i] = (score, value): inputs at or
/// above breakpoints[i].first and below breakpoints[i+1].first map to
/// breakpoints[i].second. Inputs below the first breakpoint take the first
/// value.
struct IsotonicMap {
  std::vector<std::pair<double, double>> breakpoints;

  double apply(double score) const;
};

/// Pool-adjacent-violators least-squares fit of labels on scores. Equal
/// scores are pooled up front so the fit is a function of the score.
IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const double> targets);
IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const int> labels);

using Calibrator = std::variant<PlattParams, IsotonicMap>;

double apply_calibration(const Calibrator& calibrator, double score);

nlohmann::json to_json(const Calibrator& calibrator);
Calibrator calibrator_from_json(const nlohmann::json& j);
Calibrator load_calibrator(const std::filesystem::path& path);

}  // namespace fairaudit::calibration

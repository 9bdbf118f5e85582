#include "fairaudit/stats.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fairaudit/error.hpp"

namespace fairaudit {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double two_tailed_p(double z) {
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

double hanley_mcneil_se(double auc, std::size_t n_pos, std::size_t n_neg) {
  if (!(auc >= 0.0 && auc <= 1.0)) throw ValidationError(fmt::format("AUROC {} outside [0,1]", auc));
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError(fmt::format("Hanley-McNeil SE needs both classes ({} pos, {} neg)", n_pos, n_neg));
  const double a2 = auc * auc;
  const double q1 = auc / (2.0 - auc);
  const double q2 = 2.0 * a2 / (1.0 + auc);
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  const double var = (auc * (1.0 - auc) + (np - 1.0) * (q1 - a2) + (nn - 1.0) * (q2 - a2)) / (np * nn);
  return std::sqrt(std::max(0.0, var));
}

AurocComparison compare_auroc(const AurocGroup& a, const AurocGroup& b, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError(fmt::format("alpha {} outside (0,1)", alpha));
  AurocComparison c;
  c.auroc_a = a.auc;
  c.auroc_b = b.auc;
  c.se_a = hanley_mcneil_se(a.auc, a.n_pos, a.n_neg);
  c.se_b = hanley_mcneil_se(b.auc, b.n_pos, b.n_neg);
  c.alpha = alpha;
  const double se = std::sqrt(c.se_a * c.se_a + c.se_b * c.se_b);
  const double diff = a.auc - b.auc;
  if (se == 0.0) {
    if (diff == 0.0) {
      c.z = 0.0;
      c.p = 1.0;
    } else {
      c.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
      c.p = 0.0;
      c.degenerate = true;
    }
    return c;
  }
  c.z = diff / se;
  c.p = two_tailed_p(c.z);
  return c;
}

OverlapClass classify_overlap(const IntervalEstimate& a, const IntervalEstimate& b,
                              OverlapConvention convention) {
  if (a.hi < b.lo || b.hi < a.lo) return OverlapClass::Disjoint;
  auto outside = [](double x, const IntervalEstimate& ci) { return x < ci.lo || x > ci.hi; };
  const bool a_out = outside(a.point, b);
  const bool b_out = outside(b.point, a);
  const bool one_outside = convention == OverlapConvention::Reference ? a_out : (a_out || b_out);
  return one_outside ? OverlapClass::OneOutside : OverlapClass::Overlapping;
}

std::string_view overlap_name(OverlapClass c) {
  switch (c) {
    case OverlapClass::Overlapping: return "Overlapping";
    case OverlapClass::OneOutside: return "OneOutside";
    case OverlapClass::Disjoint: return "Disjoint";
  }
  return "";
}

std::string_view asterisks(OverlapClass c) {
  switch (c) {
    case OverlapClass::Disjoint: return "**";
    case OverlapClass::OneOutside: return "*";
    case OverlapClass::Overlapping: return "";
  }
  return "";
}

std::string format_p(double p) {
  if (std::isnan(p)) return "n/a";
  if (p < 0.001) return "< .001";
  std::string s = fmt::format("{:#.2g}", p);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return s;
}

}  // namespace fairaudit

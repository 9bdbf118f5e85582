#pragma once

#include <string>
#include <vector>

#include "fairaudit/cohort.hpp"

namespace fairaudit::testing {

inline ScanRecord record(std::string id, int label, double score) {
  ScanRecord r;
  r.scan_id = id;
  r.participant_id = "p-" + id;
  r.label = label;
  r.scores["m"] = score;
  return r;
}

// Every record scored by model "m"; attribute and risk-factor columns as given.
inline Cohort cohort_of(std::vector<ScanRecord> records, std::vector<std::string> attributes = {},
                        std::vector<std::string> risk_factors = {}) {
  Cohort::Columns cols;
  cols.models = {"m"};
  cols.attributes = std::move(attributes);
  cols.risk_factors = std::move(risk_factors);
  return Cohort(std::move(records), std::move(cols), {"test", 1});
}

}  // namespace fairaudit::testing

#pragma once

#include <string>
#include <vector>

#include "hphi4/config.hpp"

namespace hphi4 {

// One recorded assertion: pass iff `value op bound` with op in
// {"<=", ">=", "<", ">"}. Checks are persisted to the JSON summary so a
// later verify pass can re-evaluate them from the file alone.
struct CheckRecord {
  std::string name;
  double value = 0.0;
  std::string op = "<=";
  double bound = 0.0;
  bool pass = false;
};

// One emitted diagnostic number, carried to the summary for traceability.
struct MetricRecord {
  std::string name;
  double value = 0.0;
};

struct StudyResult {
  std::string study;
  std::string summary_file;
  std::vector<std::string> tables;  // CSV files written, in emission order
  std::vector<CheckRecord> checks;
  std::vector<MetricRecord> metrics;
  bool pass = true;  // conjunction of the checks
};

// Study names accepted by run_study, in dispatch order.
const std::vector<std::string>& study_names();

// Runs the named study with the given configuration, writing CSV tables and
// a JSON summary (config echo, checks, metrics) under out_dir.
StudyResult run_study(const std::string& study, const RunConfig& config,
                      const std::string& out_dir);

// Re-evaluates every check recorded in a summary file. Throws IoError when
// the file is missing or unreadable and NumericalError naming the first
// check whose recorded value no longer satisfies its recorded bound.
void verify_summary(const std::string& summary_file);

}  // namespace hphi4

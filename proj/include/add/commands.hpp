#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "add/config.hpp"
#include "add/harness.hpp"

namespace add {

/// Writes records.csv, report.txt, student.ckpt and teacher.ckpt into
/// cfg.out_dir; returns the experiment result.
ExperimentResult cmd_run(const RunConfig& cfg, std::ostream& log);

/// Loads a checkpoint, prints the per-class/per-difficulty AP table and
/// writes eval.csv next to it.
ApReport cmd_eval(const std::string& checkpoint_path,
                  const std::vector<std::uint64_t>& seeds, std::ostream& log);

struct SweepEntry {
  std::string label;
  DistillConfig distill;
  double final_l_feat = 0, final_l_ed = 0;
  double ap_bev_car = 0;
};

/// Runs the eight feature/response weight ablation settings; each run
/// lands in its own subdirectory plus a sweep_summary.csv.
std::vector<SweepEntry> cmd_sweep(const RunConfig& base, std::ostream& log);

/// Summarizes an existing records.csv (first/last loss values, trend).
void cmd_report(const std::string& records_csv, std::ostream& log);

/// Fixed, versioned records.csv column order.
extern const char* kRecordsCsvHeader;

std::string format_records_csv(const std::vector<ExperimentRecord>& records);

}  // namespace add

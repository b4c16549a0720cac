#include "add/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "add/checkpoint.hpp"

namespace add {

const char* kRecordsCsvHeader =
    "step,l_feat,l_ed,l_cls,l_reg,l_depth,total,feat_dist,ap_bev_car,ap_bev_ped";

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write output file: " + path);
  os << text;
}

const char* diff_name(int d) {
  switch (d) {
    case 0: return "easy";
    case 1: return "moderate";
    default: return "hard";
  }
}

void print_ap_table(const ApReport& rep, std::ostream& log) {
  static const char* cls_name[2] = {"car", "pedestrian"};
  log << "class        bucket     ap_bev  ap_3d   n_gt\n";
  for (int cls = 0; cls < 2; ++cls) {
    log << cls_name[cls] << std::string(13 - std::string(cls_name[cls]).size(), ' ')
        << "overall    " << fmt3(rep.overall[cls].ap_bev) << "   "
        << fmt3(rep.overall[cls].ap_3d) << "  " << rep.overall[cls].n_gt << "\n";
    for (int d = 0; d < 3; ++d) {
      const ApCell& c = rep.by_diff[cls][d];
      log << cls_name[cls] << std::string(13 - std::string(cls_name[cls]).size(), ' ')
          << diff_name(d) << std::string(11 - std::string(diff_name(d)).size(), ' ')
          << fmt3(c.ap_bev) << "   " << fmt3(c.ap_3d) << "  " << c.n_gt << "\n";
    }
  }
}

std::string ap_table_csv(const ApReport& rep) {
  std::ostringstream out;
  out << "class,bucket,ap_bev,ap_3d,n_gt\n";
  static const char* cls_name[2] = {"car", "pedestrian"};
  for (int cls = 0; cls < 2; ++cls) {
    out << cls_name[cls] << ",overall," << fmt(rep.overall[cls].ap_bev) << ","
        << fmt(rep.overall[cls].ap_3d) << "," << rep.overall[cls].n_gt << "\n";
    for (int d = 0; d < 3; ++d) {
      const ApCell& c = rep.by_diff[cls][d];
      out << cls_name[cls] << "," << diff_name(d) << "," << fmt(c.ap_bev) << ","
          << fmt(c.ap_3d) << "," << c.n_gt << "\n";
    }
  }
  return out.str();
}

}  // namespace

std::string format_records_csv(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  out << kRecordsCsvHeader << "\n";
  for (const ExperimentRecord& r : records) {
    out << r.step << "," << fmt(r.loss.l_feat) << "," << fmt(r.loss.l_ed) << ","
        << fmt(r.loss.l_cls) << "," << fmt(r.loss.l_reg) << "," << fmt(r.loss.l_depth)
        << "," << fmt(r.loss.total) << "," << fmt(r.feat_dist) << ","
        << fmt(r.ap_bev_car) << "," << fmt(r.ap_bev_ped) << "\n";
  }
  return out.str();
}

ExperimentResult cmd_run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);

  // Never-distilled baseline on the held-out seeds.
  StudentParams baseline = init_student(cfg.harness);
  const StandInModel model = make_model(cfg.harness);
  const ApReport base_ap =
      evaluate_student(baseline, model, cfg.harness, cfg.harness.eval_seeds);

  ExperimentResult result = run_distillation_experiment(cfg.harness, cfg.distill);

  write_text(cfg.out_dir + "/records.csv", format_records_csv(result.records));
  save_checkpoint(cfg.out_dir + "/student.ckpt", cfg, result.student,
                  ModelRole::Student);
  save_checkpoint(cfg.out_dir + "/teacher.ckpt", cfg, baseline, ModelRole::Teacher);

  std::ostringstream rep;
  rep << "steps: " << result.records.size() << "\n";
  if (!result.records.empty()) {
    const ExperimentRecord& first = result.records.front();
    const ExperimentRecord& last = result.records.back();
    rep << "l_feat: " << fmt(first.loss.l_feat) << " -> " << fmt(last.loss.l_feat) << "\n";
    rep << "l_ed: " << fmt(first.loss.l_ed) << " -> " << fmt(last.loss.l_ed) << "\n";
  }
  rep << "baseline ap_bev car: " << fmt3(base_ap.overall[0].ap_bev) << "\n";
  rep << "final ap_bev car: " << fmt3(result.final_eval.overall[0].ap_bev) << "\n";
  rep << "baseline ap_bev pedestrian: " << fmt3(base_ap.overall[1].ap_bev) << "\n";
  rep << "final ap_bev pedestrian: " << fmt3(result.final_eval.overall[1].ap_bev) << "\n";
  rep << "inference seconds: " << fmt(result.final_eval.inference_seconds) << "\n";
  write_text(cfg.out_dir + "/report.txt", rep.str());

  log << "run complete: " << result.records.size() << " steps, outputs in "
      << cfg.out_dir << "\n";
  return result;
}

ApReport cmd_eval(const std::string& checkpoint_path,
                  const std::vector<std::uint64_t>& seeds, std::ostream& log) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  HarnessConfig hcfg = ck.cfg.harness;
  if (!seeds.empty()) hcfg.eval_seeds = seeds;
  const StandInModel model = make_model(hcfg);
  const ApReport rep =
      evaluate_student(ck.student, model, hcfg, hcfg.eval_seeds, ck.role);
  print_ap_table(rep, log);

  const std::filesystem::path csv =
      std::filesystem::path(checkpoint_path).parent_path() / "eval.csv";
  write_text(csv.string(), ap_table_csv(rep));
  return rep;
}

std::vector<SweepEntry> cmd_sweep(const RunConfig& base, std::ostream& log) {
  base.validate();
  std::filesystem::create_directories(base.out_dir);

  // Feature-weight ablation row, then response-weight ablation row.
  struct Setting {
    const char* label;
    double alpha_i, beta_i, alpha_v, beta_v;
  };
  const Setting settings[8] = {
      {"feat_bi0.00", 1.0, 0.0, base.distill.alpha_v, base.distill.beta_v},
      {"feat_bi0.05", 1.0, 0.05, base.distill.alpha_v, base.distill.beta_v},
      {"feat_bi0.10", 1.0, 0.1, base.distill.alpha_v, base.distill.beta_v},
      {"feat_bi0.20", 1.0, 0.2, base.distill.alpha_v, base.distill.beta_v},
      {"resp_bv0.10", base.distill.alpha_i, base.distill.beta_i, 1.0, 0.1},
      {"resp_bv0.25", base.distill.alpha_i, base.distill.beta_i, 1.0, 0.25},
      {"resp_bv0.50", base.distill.alpha_i, base.distill.beta_i, 1.0, 0.5},
      {"resp_bv1.00", base.distill.alpha_i, base.distill.beta_i, 1.0, 1.0},
  };

  std::vector<SweepEntry> entries;
  std::ostringstream summary;
  summary << "label,alpha_i,beta_i,alpha_v,beta_v,final_l_feat,final_l_ed,ap_bev_car\n";
  for (const Setting& s : settings) {
    RunConfig cfg = base;
    cfg.distill.alpha_i = s.alpha_i;
    cfg.distill.beta_i = s.beta_i;
    cfg.distill.alpha_v = s.alpha_v;
    cfg.distill.beta_v = s.beta_v;
    cfg.out_dir = base.out_dir + "/" + s.label;
    log << "sweep " << s.label << "\n";
    ExperimentResult res = cmd_run(cfg, log);

    SweepEntry e;
    e.label = s.label;
    e.distill = cfg.distill;
    if (!res.records.empty()) {
      e.final_l_feat = res.records.back().loss.l_feat;
      e.final_l_ed = res.records.back().loss.l_ed;
    }
    e.ap_bev_car = res.final_eval.overall[0].ap_bev;
    entries.push_back(e);
    summary << s.label << "," << fmt(s.alpha_i) << "," << fmt(s.beta_i) << ","
            << fmt(s.alpha_v) << "," << fmt(s.beta_v) << "," << fmt(e.final_l_feat)
            << "," << fmt(e.final_l_ed) << "," << fmt(e.ap_bev_car) << "\n";
  }
  write_text(base.out_dir + "/sweep_summary.csv", summary.str());
  return entries;
}

void cmd_report(const std::string& records_csv, std::ostream& log) {
  std::ifstream in(records_csv);
  if (!in) throw ConfigError("cannot open records file: " + records_csv);
  std::string header;
  if (!std::getline(in, header) || header != kRecordsCsvHeader) {
    throw ConfigError("unrecognized records header in " + records_csv);
  }
  std::string line, first, last;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (rows == 0) first = line;
    last = line;
    ++rows;
  }
  if (rows == 0) throw ConfigError("records file has no data rows: " + records_csv);

  auto field = [](const std::string& row, int idx) {
    std::stringstream ss(row);
    std::string item;
    for (int i = 0; i <= idx; ++i) std::getline(ss, item, ',');
    return item;
  };
  log << "rows: " << rows << "\n";
  log << "l_feat: " << field(first, 1) << " -> " << field(last, 1) << "\n";
  log << "l_ed: " << field(first, 2) << " -> " << field(last, 2) << "\n";
  log << "total: " << field(first, 6) << " -> " << field(last, 6) << "\n";
  log << "ap_bev_car: " << field(first, 8) << " -> " << field(last, 8) << "\n";
}

}  // namespace add

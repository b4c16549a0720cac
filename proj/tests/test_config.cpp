#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "add/checkpoint.hpp"
#include "add/commands.hpp"
#include "add/config.hpp"

using namespace add;

namespace {

RunConfig tiny_run_config(const std::string& out_dir) {
  RunConfig cfg;
  cfg.harness.grid_h = cfg.harness.grid_w = 8;
  cfg.harness.levels = 2;
  cfg.harness.decoder_levels = 2;
  cfg.harness.n_query = 8;
  cfg.harness.feat_channels = 8;
  cfg.harness.query_channels = 8;
  cfg.harness.pe_dict = 8;
  cfg.harness.pe_dim = 16;
  cfg.harness.heads = 2;
  cfg.harness.steps = 3;
  cfg.harness.eval_seeds = {901, 902};
  cfg.distill.feature_levels = 2;
  cfg.distill.decoder_levels = 2;
  cfg.out_dir = out_dir;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  RunConfig cfg = parse_config_text("");
  CHECK(cfg.distill.alpha_i == 1.0);
  CHECK(cfg.distill.beta_i == 0.1);
  CHECK(cfg.distill.alpha_v == 1.0);
  CHECK(cfg.distill.beta_v == 0.5);
  CHECK(cfg.distill.alpha == 1.0);
  CHECK(cfg.distill.beta == 1.0);
  CHECK(cfg.distill.reduction == Reduction::Normalized);
  CHECK(cfg.harness.lr == 1e-2);
  CHECK(cfg.harness.w_cls == 1.0);
  CHECK(cfg.harness.w_box == 5.0);
}

TEST_CASE("config parsing errors name the offender") {
  try {
    parse_config_text("distill.bogus = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("distill.bogus") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_config_text("distill.beta_i = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("harness.grid_h\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("train.lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("/nonexistent/path.cfg"), ConfigError);

  RunConfig off = parse_config_text("distill.beta = 0\n");
  CHECK(off.distill.beta == 0.0);
}

TEST_CASE("comments, blanks, and whitespace are tolerated") {
  RunConfig cfg = parse_config_text(
      "# leading comment\n"
      "\n"
      "  distill.alpha = 2.5  # trailing comment\n"
      "train.seed=9\n");
  CHECK(cfg.distill.alpha == 2.5);
  CHECK(cfg.harness.seed == 9);
}

TEST_CASE("serialize/parse round-trip") {
  RunConfig cfg = tiny_run_config("round_trip_out");
  cfg.distill.beta_v = 0.25;
  cfg.harness.lr = 0.003;
  cfg.harness.eval_seeds = {5, 6, 7};
  cfg.distill.reduction = Reduction::Raw;
  RunConfig back = parse_config_text(serialize_config(cfg));
  CHECK(back == cfg);
}

TEST_CASE("environment overrides win over file values") {
  setenv("ADD_DISTILL_ALPHA_I", "0.75", 1);
  setenv("ADD_TRAIN_STEPS", "11", 1);
  RunConfig cfg = parse_config_text("distill.alpha_i = 2.0\n");
  apply_env_overrides(cfg);
  CHECK(cfg.distill.alpha_i == 0.75);
  CHECK(cfg.harness.steps == 11);
  unsetenv("ADD_DISTILL_ALPHA_I");
  unsetenv("ADD_TRAIN_STEPS");
}

TEST_CASE("checkpoint round-trip preserves every tensor") {
  const std::string dir = "ckpt_test_out";
  std::filesystem::create_directories(dir);
  RunConfig cfg = tiny_run_config(dir);
  StudentParams student = init_student(cfg.harness);
  student.pe.table[3] = 123.456;
  save_checkpoint(dir + "/s.ckpt", cfg, student, ModelRole::Student);
  LoadedCheckpoint back = load_checkpoint(dir + "/s.ckpt");
  CHECK(back.role == ModelRole::Student);
  CHECK(back.cfg == cfg);

  auto a = student.named_tensors();
  auto b = back.student.named_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->data() == b[i].second->data());
  }
}

TEST_CASE("corrupt checkpoints are format errors") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.ckpt"), FormatError);

  const std::string dir = "ckpt_test_out";
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir + "/bad.ckpt", std::ios::binary);
    os << "NOTMAGIC garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/bad.ckpt"), FormatError);

  // Truncation inside the tensor block.
  RunConfig cfg = tiny_run_config(dir);
  save_checkpoint(dir + "/t.ckpt", cfg, init_student(cfg.harness), ModelRole::Student);
  std::string bytes = slurp(dir + "/t.ckpt");
  {
    std::ofstream os(dir + "/trunc.ckpt", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/trunc.ckpt"), FormatError);
}

TEST_CASE("run command emits records, report, and checkpoints") {
  RunConfig cfg = tiny_run_config("cmd_run_out");
  std::ostringstream log;
  ExperimentResult res = cmd_run(cfg, log);
  CHECK(res.records.size() == 3);

  const std::string csv = slurp(cfg.out_dir + "/records.csv");
  CHECK(csv.rfind(kRecordsCsvHeader, 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
  CHECK(std::filesystem::exists(cfg.out_dir + "/report.txt"));
  CHECK(std::filesystem::exists(cfg.out_dir + "/student.ckpt"));
  CHECK(std::filesystem::exists(cfg.out_dir + "/teacher.ckpt"));

  std::ostringstream report_log;
  cmd_report(cfg.out_dir + "/records.csv", report_log);
  CHECK(report_log.str().find("rows: 3") != std::string::npos);
}

TEST_CASE("eval command prints a perfect teacher table") {
  RunConfig cfg = tiny_run_config("cmd_eval_out");
  std::filesystem::create_directories(cfg.out_dir);
  save_checkpoint(cfg.out_dir + "/teacher.ckpt", cfg, init_student(cfg.harness),
                  ModelRole::Teacher);
  std::ostringstream log;
  ApReport rep = cmd_eval(cfg.out_dir + "/teacher.ckpt", {}, log);
  CHECK(rep.overall[0].ap_bev == 1.0);
  CHECK(log.str().find("1.000") != std::string::npos);
  CHECK(std::filesystem::exists(cfg.out_dir + "/eval.csv"));

  std::ostringstream log2;
  cmd_eval(cfg.out_dir + "/teacher.ckpt", {}, log2);
  CHECK(log.str() == log2.str());
}

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "add/checkpoint.hpp"
#include "add/commands.hpp"
#include "add/config.hpp"

namespace {

add::RunConfig load_run_config(const std::string& config_path,
                               std::uint64_t seed_override, bool seed_set,
                               const std::string& out_override) {
  add::RunConfig cfg;
  if (!config_path.empty()) cfg = add::parse_config(config_path);
  add::apply_env_overrides(cfg);
  if (seed_set) cfg.harness.seed = seed_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-distillation experiment driver"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, records_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::uint64_t> eval_seeds;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "training seed override")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_dir, "output directory override");
  };

  CLI::App* run = app.add_subcommand("run", "train a distilled student");
  add_common(run);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--seeds", eval_seeds, "held-out scene seeds");
  CLI::App* sweep = app.add_subcommand("sweep", "distillation weight ablation");
  add_common(sweep);
  CLI::App* report = app.add_subcommand("report", "summarize a records CSV");
  report->add_option("records", records_path, "records.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      add::cmd_run(load_run_config(config_path, seed, seed_set, out_dir), std::cout);
    } else if (eval->parsed()) {
      add::cmd_eval(checkpoint_path, eval_seeds, std::cout);
    } else if (sweep->parsed()) {
      add::cmd_sweep(load_run_config(config_path, seed, seed_set, out_dir), std::cout);
    } else if (report->parsed()) {
      add::cmd_report(records_path, std::cout);
    }
  } catch (const add::ConfigError& e) {
    std::cerr << "E_CONFIG " << e.what() << "\n";
    return 2;
  } catch (const add::FormatError& e) {
    std::cerr << "E_FORMAT " << e.what() << "\n";
    return 3;
  } catch (const add::TrainingError& e) {
    std::cerr << "E_TRAIN step=" << e.step << " " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "E_RUNTIME " << e.what() << "\n";
    return 1;
  }
  return 0;
}

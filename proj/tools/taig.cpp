// taig: train the model zoo, generate adversarial examples, evaluate
// transfer, and run ablation sweeps from a single JSON config.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "taig/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"integrated-gradients attribution and transfer-attack laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  long long seed_override = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "path to the JSON run config")->required();
    cmd->add_option("--out", out_dir, "output directory (default: out)");
    cmd->add_option("--seed", seed_override, "override the config's global seed");
  };

  auto* train_cmd = app.add_subcommand("train", "train and save the model zoo");
  auto* attack_cmd = app.add_subcommand("attack", "generate adversarial dumps");
  auto* eval_cmd = app.add_subcommand("eval", "emit transfer/metric reports");
  auto* ablate_cmd = app.add_subcommand("ablate", "sweep S/E/samples-per-segment");
  for (auto* c : {train_cmd, attack_cmd, eval_cmd, ablate_cmd}) add_common(c);

  CLI11_PARSE(app, argc, argv);

  try {
    taig::RunConfig rc = taig::load_run_config(config_path);
    if (seed_override >= 0) rc.seed = static_cast<std::uint64_t>(seed_override);
    if (train_cmd->parsed()) taig::cmd_train(rc, out_dir);
    if (attack_cmd->parsed()) taig::cmd_attack(rc, out_dir);
    if (eval_cmd->parsed()) taig::cmd_eval(rc, out_dir);
    if (ablate_cmd->parsed()) taig::cmd_ablate(rc, out_dir);
  } catch (const taig::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}

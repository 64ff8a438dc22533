// Command-line entry point. Every subcommand reads the same flat key=value
// configuration (file via --config, overrides via --set/--seed/--out) and
// delegates to a harness runner. All output goes to files under out_dir;
// stdout carries a single completion line per run.

#include "marginlab/harness.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "key=value config file");
  cmd->add_option("--out", args->out_dir, "output directory (overrides out_dir)");
  cmd->add_option("--seed", args->seed, "master seed (overrides seed)");
  cmd->add_option("--set", args->sets, "override a config key, e.g. --set lambda=0.1")
      ->take_all();
}

marginlab::Config build_config(const CommonArgs& args) {
  marginlab::Config cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& pair : args.sets) cfg.set_pair(pair);
  if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
  if (!args.out_dir.empty()) cfg.set("out_dir", args.out_dir);
  return cfg;
}

std::string documented_keys_footer() {
  std::string footer = "Config keys:";
  int col = 0;
  for (const auto& key : marginlab::Config::documented_keys()) {
    if (col == 0) footer += "\n  ";
    footer += key;
    footer += "  ";
    col = (col + 1) % 6;
  }
  return footer;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"margin-analysis toolkit: robust training, exact and sampled "
               "margins, gradient attacks"};
  app.require_subcommand(1);
  app.footer(documented_keys_footer());

  CommonArgs args;
  CLI::App* train = app.add_subcommand(
      "train", "train one model (linear or mlp) with margin logging");
  CLI::App* attack = app.add_subcommand(
      "attack", "evaluate a checkpoint against the gradient attack grid");
  CLI::App* margin = app.add_subcommand(
      "margin", "measure margins of a checkpoint on the dataset splits");
  CLI::App* fisher = app.add_subcommand(
      "fisher", "scan the conditional-risk calibration check");
  CLI::App* svm_ref = app.add_subcommand(
      "svm-ref", "hard-margin reference direction for a binary digit pair");
  CLI::App* report = app.add_subcommand(
      "report", "run a full experiment per the experiment config key");
  for (CLI::App* cmd : {train, attack, margin, fisher, svm_ref, report}) {
    add_common(cmd, &args);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const marginlab::Config cfg = build_config(args);
    std::string out;
    if (train->parsed()) {
      marginlab::harness::run_train(cfg);
      out = cfg.effective().at("out_dir");
    } else if (attack->parsed()) {
      marginlab::harness::run_attack(cfg);
      out = cfg.effective().at("out_dir");
    } else if (margin->parsed()) {
      marginlab::harness::run_margin(cfg);
      out = cfg.effective().at("out_dir");
    } else if (fisher->parsed()) {
      const auto result = marginlab::harness::run_fisher(cfg);
      out = cfg.effective().at("out_dir");
      std::cout << (result.consistent ? "consistent" : "inconsistent") << "\n";
    } else if (svm_ref->parsed()) {
      const auto svm = marginlab::harness::run_svm_ref(cfg);
      out = cfg.effective().at("out_dir");
      std::cout << "svm margin " << marginlab::harness::fmt(svm.margin)
                << " after " << svm.sweeps << " sweeps\n";
    } else if (report->parsed()) {
      marginlab::harness::run_experiment(cfg);
      out = cfg.effective().at("out_dir");
    }
    std::cout << "wrote " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bcqlab/config.hpp"
#include "bcqlab/harness.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  long seed = 0;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "settings file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "override the seed key");
  cmd->add_option("--out", opts.out_dir, "override the out_dir key");
}

bcqlab::Config load_config(const CLI::App* cmd, const CommonOpts& opts) {
  bcqlab::Config cfg = opts.config_path.empty() ? bcqlab::Config::defaults()
                                                : bcqlab::Config::load(opts.config_path);
  if (cmd->count("--seed")) cfg.set("seed", std::to_string(opts.seed));
  if (cmd->count("--out")) cfg.set("out_dir", opts.out_dir);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch reinforcement learning laboratory"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, eval_opts, analyze_opts, demo_opts, report_opts;
  bool train_expert = false;

  CLI::App* gen =
      app.add_subcommand("generate-batch", "collect a transition batch for a scenario");
  add_common(gen, gen_opts);
  gen->add_flag("--train-expert", train_expert,
                "train and save the demonstrator before collecting");

  CLI::App* train = app.add_subcommand("train", "train an agent on a batch");
  add_common(train, train_opts);

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a trained run's checkpoint");
  add_common(eval, eval_opts);

  CLI::App* analyze = app.add_subcommand(
      "analyze-extrapolation", "exact error analysis of a batch on a tabular environment");
  add_common(analyze, analyze_opts);

  CLI::App* demo = app.add_subcommand(
      "kbrl-demo", "kernel-model failure demonstration on the two-state chain");
  add_common(demo, demo_opts);

  CLI::App* report = app.add_subcommand("report", "summarize every metrics file under out_dir");
  add_common(report, report_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return bcqlab::cmd_generate_batch(load_config(gen, gen_opts), train_expert);
    if (train->parsed()) return bcqlab::cmd_train(load_config(train, train_opts));
    if (eval->parsed()) return bcqlab::cmd_evaluate(load_config(eval, eval_opts));
    if (analyze->parsed()) return bcqlab::cmd_analyze(load_config(analyze, analyze_opts));
    if (demo->parsed()) return bcqlab::cmd_kbrl_demo(load_config(demo, demo_opts));
    if (report->parsed()) return bcqlab::cmd_report(load_config(report, report_opts));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

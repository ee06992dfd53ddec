#include <CLI11.hpp>

#include <ostream>

#include "fcca/app.hpp"

namespace fcca::app {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Formation control with LLM-designed rewards: training, evaluation and reward tuning", "fcca"};
  app.require_subcommand(1);

  TrainOptions train;
  std::string train_reward, train_out;
  std::uint64_t train_seed = 0;
  std::size_t train_batches = 0;
  auto* t = app.add_subcommand("train", "Train a team with a fixed reward program");
  t->add_option("-c,--config", train.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  t->add_option("-r,--reward", train_reward, "Reward program (.rdsl); default: config or builtin");
  t->add_option("-o,--out", train_out, "Output directory; default: config output_dir");
  auto* t_seed = t->add_option("--seed", train_seed, "Override the master seed");
  auto* t_batches = t->add_option("--max-batches", train_batches, "Override the batch cap");

  EvalOptions ev;
  std::string eval_out;
  std::size_t eval_episodes = 0;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("-c,--config", ev.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  e->add_option("-k,--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--protocol", ev.protocol, "default (config eval section) or table2 (3 seeds x 300 episodes)")
      ->check(CLI::IsMember({"default", "table2"}));
  e->add_option("--world", ev.world, "World section: world, init_world or tune_world")
      ->check(CLI::IsMember({"world", "init_world", "tune_world"}));
  auto* e_eps = e->add_option("--episodes", eval_episodes, "Override episodes per seed");
  e->add_option("-o,--out", eval_out, "Write eval_report.txt/json here");

  TuneOptions tune;
  std::string tune_out, tune_record;
  auto* u = app.add_subcommand("tune", "Run reward initialization and tuning end to end");
  u->add_option("-c,--config", tune.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  u->add_option("-o,--out", tune_out, "Output directory; default: config output_dir");
  u->add_option("--record", tune_record, "Append every backend exchange to this transcript");

  ReplayOptions replay;
  std::string replay_out;
  auto* r = app.add_subcommand("replay", "Re-execute a journal against its archived responses");
  r->add_option("journal", replay.journal, "Journal written by tune")->required();
  r->add_option("-o,--out", replay_out, "Write the re-executed journal here");

  PlotOptions plot;
  std::string plot_out = "plots";
  auto* p = app.add_subcommand("plot", "Reward curves and metric trends from metrics files");
  p->add_option("metrics", plot.metrics, "Metrics files (JSON lines)")->required();
  p->add_option("-l,--label", plot.labels, "One label per metrics file");
  p->add_option("-o,--out", plot_out, "Output directory");

  DslCheckOptions check;
  auto add_check_opts = [&check](CLI::App* c) {
    c->add_option("file", check.file, "Reward program (.rdsl)")->required();
    c->add_option("--context", check.context, "name=value; evaluates the program on this context");
  };
  auto* d = app.add_subcommand("dsl-check", "Parse and validate a reward program");
  add_check_opts(d);
  auto* dsl = app.add_subcommand("dsl", "Reward language tools");
  dsl->require_subcommand(1);
  auto* dc = dsl->add_subcommand("check", "Parse and validate a reward program");
  add_check_opts(dc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? int{kExitOk} : int{kExitConfig};
  }

  if (*t) {
    if (!train_reward.empty()) train.reward = train_reward;
    if (!train_out.empty()) train.out = train_out;
    if (t_seed->count()) train.seed = train_seed;
    if (t_batches->count()) train.max_batches = train_batches;
    return cmd_train(train, out, err);
  }
  if (*e) {
    if (e_eps->count()) ev.episodes = eval_episodes;
    if (!eval_out.empty()) ev.out = eval_out;
    return cmd_eval(ev, out, err);
  }
  if (*u) {
    if (!tune_out.empty()) tune.out = tune_out;
    if (!tune_record.empty()) tune.record = tune_record;
    return cmd_tune(tune, out, err);
  }
  if (*r) {
    if (!replay_out.empty()) replay.out = replay_out;
    return cmd_replay(replay, out, err);
  }
  if (*p) {
    plot.out = plot_out;
    return cmd_plot(plot, out, err);
  }
  return cmd_dsl_check(check, out, err);
}

}  // namespace fcca::app

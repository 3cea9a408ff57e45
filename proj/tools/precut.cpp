// Command-line front end: generate data, train, evaluate, sweep one axis, or
// benchmark the reduced stack. Every subcommand takes an optional JSON config
// plus targeted flag overrides; outputs are CSV files under --out.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "precut/harness.hpp"

namespace {

struct Overrides {
  std::string config_path;
  // flag presence tracked by CLI11 counts; values staged here
  double keep_ratio = 0, merge_fraction = 0, alpha = 0, lr = 0;
  int stage1_steps = 0, stage2_steps = 0, train_clips = 0, eval_clips = 0;
  std::uint64_t seed = 0;
  std::string mode, restoration, schedule;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--keep-ratio", o.keep_ratio, "fraction of tokens kept per frame (0, 1]");
  cmd->add_option("--merge-fraction", o.merge_fraction, "merge budget as a fraction of all tokens [0, 1]");
  cmd->add_option("--alpha", o.alpha, "blend between camera-anchoring and cross-view saliency [0, 1]");
  cmd->add_option("--mode", o.mode, "routing mode: three-way | pure-prune | full-merge | uniform-alloc");
  cmd->add_option("--restoration", o.restoration, "restoration: cross-attention | zero-fill | bilinear");
  cmd->add_option("--schedule", o.schedule, "training schedule: stage1-only | stage2-only | joint | two-stage");
  cmd->add_option("--stage1-steps", o.stage1_steps, "first-stage step count");
  cmd->add_option("--stage2-steps", o.stage2_steps, "second-stage step count");
  cmd->add_option("--train-clips", o.train_clips, "number of training clips");
  cmd->add_option("--eval-clips", o.eval_clips, "number of evaluation clips");
  cmd->add_option("--lr", o.lr, "optimizer learning rate");
}

precut::ExperimentConfig resolve(const CLI::App* cmd, const Overrides& o) {
  precut::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = precut::ExperimentConfig::load(o.config_path);
  auto set = [&](const char* flag, auto apply) {
    if (cmd->count(flag)) apply();
  };
  set("--seed", [&] { cfg.seed = o.seed; });
  set("--keep-ratio", [&] { cfg.keep_ratio = o.keep_ratio; });
  set("--merge-fraction", [&] { cfg.merge_fraction = o.merge_fraction; });
  set("--alpha", [&] { cfg.alpha = o.alpha; });
  set("--mode", [&] { cfg.mode = o.mode; });
  set("--restoration", [&] { cfg.restoration = o.restoration; });
  set("--schedule", [&] { cfg.schedule = o.schedule; });
  set("--stage1-steps", [&] { cfg.stage1_steps = o.stage1_steps; });
  set("--stage2-steps", [&] { cfg.stage2_steps = o.stage2_steps; });
  set("--train-clips", [&] { cfg.train_clips = o.train_clips; });
  set("--eval-clips", [&] { cfg.eval_clips = o.eval_clips; });
  set("--lr", [&] { cfg.lr = o.lr; });
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token pruning pipeline for a frozen alternating-attention stack"};
  app.require_subcommand(1);

  Overrides o;
  std::string out_dir = "out";
  std::string stage;
  std::string checkpoint_path;
  std::string axis;
  std::vector<std::string> values;
  std::vector<int> frame_counts;
  int warmups = 2, reps = 3;

  CLI::App* gen = app.add_subcommand("gen", "render the config's train/eval clips to disk");
  add_common(gen, o);
  gen->add_option("--out", out_dir, "output directory");

  CLI::App* tr = app.add_subcommand("train", "train scorer (+ restoration) on generated clips");
  add_common(tr, o);
  tr->add_option("--out", out_dir, "output directory");
  tr->add_option("--stage", stage,
                 "1 = first stage only, 2 = resume into stage 2, joint = force the single-stage schedule "
                 "(omit to run the configured schedule end to end)")
      ->check(CLI::IsMember({"1", "2", "joint"}));

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the eval clips");
  add_common(ev, o);
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ev->add_option("--out", out_dir, "output directory");

  CLI::App* sw = app.add_subcommand("sweep", "train + eval across one axis");
  add_common(sw, o);
  sw->add_option("--axis", axis, "keep_ratio | alpha | mode | restoration | schedule")->required();
  sw->add_option("--values", values, "explicit values (default: the axis's standard grid)");
  sw->add_option("--out", out_dir, "output directory");

  CLI::App* be = app.add_subcommand("bench", "time full vs. reduced stacks on one clip");
  add_common(be, o);
  be->add_option("--out", out_dir, "output directory");
  be->add_option("--frames", frame_counts, "frame counts to bench (default: the config's frame count)");
  be->add_option("--warmups", warmups, "untimed repetitions");
  be->add_option("--reps", reps, "timed repetitions (median reported)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      precut::cmd_gen(resolve(gen, o), out_dir);
    } else if (tr->parsed()) {
      precut::cmd_train(resolve(tr, o), out_dir, stage);
    } else if (ev->parsed()) {
      precut::cmd_eval(resolve(ev, o), checkpoint_path, out_dir);
    } else if (sw->parsed()) {
      precut::cmd_sweep(resolve(sw, o), axis, values, out_dir);
    } else if (be->parsed()) {
      precut::cmd_bench(resolve(be, o), out_dir, frame_counts, warmups, reps);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

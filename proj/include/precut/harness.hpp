#pragma once

#include <string>
#include <vector>

#include "precut/config.hpp"

namespace precut {

// The CLI subcommands as library calls, so tests drive the exact same paths.
// All of them throw std::runtime_error on user errors (bad paths, config /
// checkpoint mismatches, impossible stage requests).

// Materializes the config's train and eval clips under out_dir.
void cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir);

// stage: "" = run the configured schedule end to end, "1" = first stage only,
// "2" = continue a two-stage run from out_dir's stage-1 checkpoint (schedules
// without a separate first stage run whole), "joint" = force the single-stage
// joint schedule. Writes checkpoint.json (or checkpoint_stage1.json),
// loss_curve*.csv, config.json.
void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& stage = "");

// Evaluates a checkpoint on the config's eval clips; refuses checkpoints
// whose recorded fingerprint disagrees with this config. Writes metrics.csv
// and scores.csv.
void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path, const std::string& out_dir);

// Trains + evaluates once per value along one axis; empty `values` selects
// the axis's standard grid. Writes sweep.csv.
void cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, std::vector<std::string> values,
               const std::string& out_dir);

// Times full / pre-reduce / mid-reduce stacks on one clip per frame count
// (empty list = the config's own frame count). Writes bench.csv with one row
// per (frame count, mode).
void cmd_bench(const ExperimentConfig& cfg, const std::string& out_dir, std::vector<int> frame_counts = {},
               int warmups = 2, int reps = 3);

// Shared helpers (also used by the test suites).
std::vector<ClipSample> make_clips(const ExperimentConfig& cfg, const std::string& stream, int count);
void save_training_checkpoint(const std::string& path, const ExperimentConfig& cfg, const std::string& stage,
                              const ScorerParams& scorer, const RestorationParams& restore);
void load_training_checkpoint(const std::string& path, const ExperimentConfig& cfg, ScorerParams& scorer,
                              RestorationParams& restore, std::string* stage = nullptr);
std::vector<std::string> sweep_grid(const std::string& axis);

}  // namespace precut

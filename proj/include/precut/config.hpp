#pragma once

#include <cstdint>
#include <string>

#include "precut/bench.hpp"

namespace precut {

// One experiment, fully specified. Serialized as JSON; the FNV-1a fingerprint
// of the canonical dump ties checkpoints and result rows to the exact
// configuration that produced them.
struct ExperimentConfig {
  // data + frozen stack
  int frames = 4;
  int grid_h = 8;
  int grid_w = 8;
  int channels = 8;
  int input_dim = 32;
  int model_dim = 48;
  int layers = 4;
  int heads = 4;
  int registers = 4;
  double qk_gain = 1.0;  // global-attention sharpness of the frozen stand-in

  // scoring + routing + restoration
  int scorer_hidden = 64;
  double alpha = 0.25;
  double keep_ratio = 0.4;
  double merge_fraction = 0.3;
  std::string mode = "three-way";
  std::string restoration = "cross-attention";
  int restore_dim = 32;
  int restore_heads = 4;

  // training
  std::string schedule = "two-stage";
  int stage1_steps = 200;
  int stage2_steps = 200;
  double lr = 1e-3;
  double loss_distill = 1.0;
  double loss_restore = 1.0;
  double loss_task = 0.1;
  double sigma_reg = 0.1;
  double huber_delta = 1.0;
  int train_clips = 4;
  int eval_clips = 4;
  uint64_t seed = 7;

  BackboneConfig backbone() const;
  SceneConfig scene() const;
  PipelineSettings settings() const;
  TrainOptions train_options() const;
  LossWeights loss_weights() const;

  std::string to_json() const;  // canonical: sorted keys, stable float formatting
  static ExperimentConfig from_json(const std::string& text);
  void save(const std::string& path) const;
  static ExperimentConfig load(const std::string& path);

  uint64_t fingerprint() const;
  std::string fingerprint_hex() const;

  // Seed for the i-th clip of a named stream ("train", "eval", ...), stable
  // under changes to any other stream.
  uint64_t clip_seed(const std::string& stream, int index) const;
};

}  // namespace precut

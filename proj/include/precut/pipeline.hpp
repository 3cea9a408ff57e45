#pragma once

#include "precut/objectives.hpp"
#include "precut/restore.hpp"
#include "precut/router.hpp"
#include "precut/scorer.hpp"

namespace precut {

// Everything that stays frozen: patch encoder, alternating-attention stack,
// and the task readout heads. Reconstructed deterministically from (config,
// channels, seed); the readout weights are least-squares calibrated once on
// held-out clips derived from the same seed. Timing-only callers can skip
// the calibration passes, which matter solely for the task-loss values.
struct FrozenModel {
  BackboneConfig cfg;
  int channels = 8;
  uint64_t seed = 0;
  EncoderParams enc;
  BackboneParams bb;
  HeadParams heads;

  static FrozenModel init(const BackboneConfig& cfg, int channels, uint64_t seed, bool calibrate_heads = true);
  ParamMap frozen_params() const;
};

// One full-resolution pass of a clip through the frozen stack: the encoded
// grids, the attention-derived score target, and the per-frame patch outputs
// that the restoration loss reconstructs.
struct UnprunedRun {
  std::vector<TokenGrid> grids;
  SaliencyMap target;
  std::vector<Tensor> full_patch_out;  // per frame [P x D']
  Tensor camera_out;                   // [frames x D']
  FlopCount flops;
};

UnprunedRun run_unpruned(const FrozenModel& model, const ClipSample& clip, double alpha);

struct PipelineSettings {
  double keep_ratio = 0.4;
  double merge_fraction = 0.3;
  double alpha = 0.25;
  RoutingMode mode = RoutingMode::ThreeWay;
  RestoreVariant variant = RestoreVariant::CrossAttention;
};

// Node handles out of one pruned forward pass, losses included. Token
// selection happens eagerly (the plan is data, not graph); the scorer's
// gradient path into the task losses runs through the merge weights alone.
struct PrunedForward {
  std::vector<NodeId> scores;    // per frame [P x 1]
  RoutingPlan plan;
  NodeId backbone_out;           // [T_reduced x D']
  TokenLayout reduced;
  std::vector<NodeId> restored;  // per frame [P x D']
  NodeId camera_pred;            // [frames x 8]
  NodeId distill;                // scalar loss nodes
  NodeId restore_loss;
  NodeId camera;
  NodeId depth;
  NodeId point;
};

PrunedForward build_pruned_forward(Graph& g, const FrozenModel& model, const UnprunedRun& run, const ClipSample& clip,
                                   ScorerParams& scorer, RestorationParams& restore, const PipelineSettings& s,
                                   const LossWeights& w, bool training);

// Row bookkeeping for a sequence that keeps only `kept[f]` patches per frame
// (original flat indices), plus each frame's camera and register tokens.
TokenLayout kept_layout(int frames, int registers, const std::vector<std::vector<int>>& kept);

struct EvalMetrics {
  double restore_mse = 0;
  double depth_mae = 0;
  double point_mae = 0;
  double camera_mae = 0;
  double spearman = 0;   // predicted scores vs. attention-derived target
  double distill_bce = 0;
  double objective = 0;  // weighted stage-2 objective at eval settings
};

EvalMetrics evaluate_clip(const FrozenModel& model, const ClipSample& clip, ScorerParams& scorer,
                          RestorationParams& restore, const PipelineSettings& s, const LossWeights& w);

// Spearman rank correlation with tie-averaged ranks; 0 when either side has
// no variance.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct TrainOptions {
  Schedule schedule = Schedule::TwoStage;
  int stage1_steps = 200;
  int stage2_steps = 200;
  double lr = 1e-3;
  int scorer_hidden = 64;
  int restore_dim = 32;
  int restore_heads = 4;
  LossWeights weights;
  PipelineSettings pipe;
};

struct TrainLogRow {
  int step = 0;
  int stage = 1;
  double total = 0, distill = 0, restore = 0, camera = 0, depth = 0, point = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  ScorerParams scorer;
  RestorationParams restore;
};

// Stage 1 fits the scorer to the attention-derived targets; stage 2 trains
// scorer (+ restoration when it is the learned variant) against the combined
// objective on the pruned pipeline. Which stages run, and with what distill
// weight, follows the schedule; step counts come from the options so callers
// can hold the total budget fixed across schedules. `warm_start` (when given)
// replaces the scorer's fresh initialization — batch-norm statistics
// included — which is how a two-stage run resumes from a saved first stage.
TrainResult train(const FrozenModel& model, const std::vector<ClipSample>& clips, const TrainOptions& opt,
                  uint64_t seed, const ScorerParams* warm_start = nullptr);

}  // namespace precut

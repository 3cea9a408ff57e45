#pragma once

#include <string>

#include "precut/pipeline.hpp"

namespace precut {

// Where the token budget is spent:
//   Full      - every token through every block.
//   PreReduce - score, route, and fold tokens before the stack (the pipeline
//               this project builds), restoration included in the timing.
//   MidReduce - full-width entry, the same keep set applied halfway up the
//               stack; models reduction living inside the architecture.
enum class BenchMode { Full, PreReduce, MidReduce };

std::string bench_mode_name(BenchMode mode);

struct BenchRecord {
  std::string mode;
  int frames = 0;            // N
  int patches = 0;           // P per frame
  double keep_ratio = 0;     // r
  int cut_after_layer = 0;   // layer the reduction lands after (0 = before entry / none)
  int rows_full = 0;         // sequence rows at full resolution
  int rows_reduced = 0;      // rows after reduction (== rows_full for Full)
  double wall_ms = 0;        // median over timed repetitions
  FlopCount flops;           // attention-stack work only
};

// Runs one clip end to end (encode onward) `reps` times after `warmups` and
// reports the median wall time plus the stack's FLOP breakdown. The scorer is
// used as-is; benchmarking does not require trained weights.
BenchRecord bench_pipeline(const FrozenModel& model, const ClipSample& clip, ScorerParams& scorer,
                           RestorationParams& restore, const PipelineSettings& s, BenchMode mode, int warmups,
                           int reps);

}  // namespace precut

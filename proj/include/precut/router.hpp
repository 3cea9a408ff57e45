#pragma once

#include <string>

#include "precut/graph.hpp"
#include "precut/saliency.hpp"

namespace precut {

enum class RoutingMode { ThreeWay, PurePrune, FullMerge, UniformAlloc };

std::string routing_mode_name(RoutingMode mode);
RoutingMode routing_mode_from_name(const std::string& name);

// Per-frame routing decision. All index lists hold flat patch indices in
// ascending order; merge_dst[i] is the slot into `keep` that merge[i] folds
// into. Every patch index lands in exactly one of keep/merge/prune.
struct FrameRoute {
  std::vector<int> keep;
  std::vector<int> merge;
  std::vector<int> merge_dst;
  std::vector<int> prune;
  double importance = 0.0;
  int merge_budget = 0;
};

struct RoutingPlan {
  RoutingMode mode = RoutingMode::ThreeWay;
  double keep_ratio = 1.0;
  double merge_fraction = 0.0;
  int total_merge_budget = 0;
  std::vector<FrameRoute> frames;

  void validate(int patches) const;  // throws on overlap, gaps, or bad destinations
  std::string to_json() const;
  static RoutingPlan from_json(const std::string& text);
};

// Top ceil(P * r) token indices per frame by score, ties to the lower flat
// index, returned ascending.
std::vector<std::vector<int>> select_keep(const SaliencyMap& scores, double keep_ratio);

// Mean score over each frame's non-kept tokens; 0 for an empty residual.
std::vector<double> frame_importance(const SaliencyMap& scores, const std::vector<std::vector<int>>& keep_sets);

// Splits `budget` merge slots across frames proportionally to phi, capped at
// each frame's residual size, capacity freed by a cap re-apportioned among the
// rest, fractional shares settled by largest remainder (ties to the lower
// frame index). All-zero phi falls back to uniform weights under the same
// rules. The result always sums to `budget`, which must not exceed the total
// residual capacity.
std::vector<int> allocate_merge_budget(const std::vector<double>& phi, const std::vector<int>& residual_sizes,
                                       int budget);

// Cosine similarity in encoder-feature space against every kept token of the
// same frame; first best slot wins ties, zero-norm vectors score 0 everywhere.
std::vector<int> assign_merge_destinations(const Tensor& features, const std::vector<int>& keep,
                                           const std::vector<int>& merge);

RoutingPlan route(const std::vector<TokenGrid>& grids, const SaliencyMap& scores, double keep_ratio,
                  double merge_fraction, RoutingMode mode);

// The differentiable fold of one frame's routed tokens (Eq-style scatter-add
// weighted by merge scores) lives on the graph; this folds eagerly.
Tensor merge_frame(const Tensor& features, const Tensor& scores_col, const FrameRoute& fr);
MergeSpec merge_spec(const FrameRoute& fr);

}  // namespace precut

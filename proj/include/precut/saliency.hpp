#pragma once

#include "precut/backbone.hpp"

namespace precut {

enum class SaliencyKind { Target, Predicted };

// Per-token scores in [0, 1], one row per frame, columns in flat patch order.
struct SaliencyMap {
  SaliencyKind kind = SaliencyKind::Target;
  Tensor scores;  // [frames x P]

  int frames() const { return scores.rows(); }
  int patches() const { return scores.cols(); }
  double at(int f, int p) const { return scores.at(f, p); }
};

// Mean over every captured (layer, head) attention matrix.
Tensor attention_mean(const AttentionTrace& trace);

// How much frame f's own camera token attends to each of its patch tokens,
// averaged over layers and heads. Length P, values in [0, 1].
std::vector<double> camera_anchoring(const AttentionTrace& trace, int f);

// For each patch token, its strongest averaged outgoing attention onto any
// other patch token anywhere in the sequence (camera/register columns are not
// candidates). Flat over frames: index f*P + p.
std::vector<double> cross_view_matching(const AttentionTrace& trace);

// Per-frame min-max normalization; a frame whose values are all equal maps to
// the constant 0.5.
void minmax_normalize_rows(Tensor& scores);

// S* = alpha * Norm(camera) + (1 - alpha) * Norm(matching).
SaliencyMap blend_target(const std::vector<double>& cam, const std::vector<double>& global, double alpha, int frames,
                         int patches);

// Full path from a captured trace to the training target.
SaliencyMap saliency_target(const AttentionTrace& trace, double alpha);

}  // namespace precut

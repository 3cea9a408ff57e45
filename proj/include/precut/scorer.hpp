#pragma once

#include "precut/graph.hpp"
#include "precut/saliency.hpp"

namespace precut {

struct BatchNormState {
  Tensor gamma, beta;
  Tensor running_mean, running_var;

  static BatchNormState init(int channels);
};

// Lightweight convolutional scorer over one frame's [P x D] token grid:
// pointwise D -> hidden, batch norm, GELU, depthwise 3x3, batch norm, GELU,
// pointwise hidden -> 1, sigmoid. No positional input; the receptive field is
// the token's own 3x3 neighborhood.
struct ScorerParams {
  int hidden = 64;
  Tensor w_in, b_in;    // [D x hidden], [hidden]
  Tensor w_dw, b_dw;    // [hidden x 9], [hidden]
  Tensor w_out, b_out;  // [hidden x 1], [1]
  BatchNormState bn1, bn2;

  static ScorerParams init(int input_dim, int hidden, uint64_t seed);
  static size_t count_for(int input_dim, int hidden);  // trainable tensors only
  size_t trainable_count() const;

  // Trainable tensors, keyed "scorer.*". Running stats are serialized under
  // "scorer.bn*.running_*" but are not parameters.
  ParamMap trainable() const;
  ParamMap state() const;
  void load_state(const ParamMap& params);
};

// Graph node names used when the scorer runs on the tape.
ParamMap scorer_trainable(const ScorerParams& p);

// Builds the scoring head for one frame. `features` is a [P x D] node,
// `nodes` the registered trainable tensors, `state` supplies (and in training
// mode accumulates) the batch-norm running statistics. Returns a [P x 1] node
// of scores in (0, 1).
NodeId scorer_forward(Graph& g, NodeId features, const std::map<std::string, NodeId>& nodes, ScorerParams& state,
                      int h, int w, bool training);

// Mean binary cross entropy between predicted scores and the saliency target.
// Predictions are clamped to [1e-7, 1 - 1e-7] inside the loss only.
NodeId distill_loss(Graph& g, const std::vector<NodeId>& frame_scores, const SaliencyMap& target);

// Convenience: evaluates scores for every frame without gradients.
SaliencyMap score_frames(const std::vector<TokenGrid>& grids, ScorerParams& params, const BackboneConfig& cfg,
                         bool training);

}  // namespace precut

#include "precut/scorer.hpp"

#include <cmath>

namespace precut {

BatchNormState BatchNormState::init(int channels) {
  BatchNormState s;
  s.gamma = Tensor::full({channels}, 1.0);
  s.beta = Tensor::zeros({channels});
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  return s;
}

ScorerParams ScorerParams::init(int input_dim, int hidden, uint64_t seed) {
  Rng rng = Rng(seed).fork(17);
  ScorerParams p;
  p.hidden = hidden;
  p.w_in = Tensor::randn({input_dim, hidden}, rng, std::sqrt(2.0 / input_dim));
  p.b_in = Tensor::zeros({hidden});
  p.w_dw = Tensor::randn({hidden, 9}, rng, std::sqrt(2.0 / 9.0));
  p.b_dw = Tensor::zeros({hidden});
  p.w_out = Tensor::randn({hidden, 1}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  p.b_out = Tensor::zeros({1});
  p.bn1 = BatchNormState::init(hidden);
  p.bn2 = BatchNormState::init(hidden);
  return p;
}

size_t ScorerParams::count_for(int input_dim, int hidden) {
  // pointwise + depthwise + pointwise, biases, and two batch-norm affines
  return static_cast<size_t>(input_dim) * hidden + hidden + static_cast<size_t>(hidden) * 9 + hidden +
         static_cast<size_t>(hidden) + 1 + 4 * static_cast<size_t>(hidden);
}

size_t ScorerParams::trainable_count() const {
  size_t n = 0;
  for (const auto& [name, t] : trainable()) n += static_cast<size_t>(t.numel());
  return n;
}

ParamMap ScorerParams::trainable() const {
  ParamMap out;
  out["scorer.w_in"] = w_in;
  out["scorer.b_in"] = b_in;
  out["scorer.w_dw"] = w_dw;
  out["scorer.b_dw"] = b_dw;
  out["scorer.w_out"] = w_out;
  out["scorer.b_out"] = b_out;
  out["scorer.bn1.gamma"] = bn1.gamma;
  out["scorer.bn1.beta"] = bn1.beta;
  out["scorer.bn2.gamma"] = bn2.gamma;
  out["scorer.bn2.beta"] = bn2.beta;
  return out;
}

ParamMap ScorerParams::state() const {
  ParamMap out = trainable();
  out["scorer.bn1.running_mean"] = bn1.running_mean;
  out["scorer.bn1.running_var"] = bn1.running_var;
  out["scorer.bn2.running_mean"] = bn2.running_mean;
  out["scorer.bn2.running_var"] = bn2.running_var;
  return out;
}

void ScorerParams::load_state(const ParamMap& params) {
  w_in = params.at("scorer.w_in");
  b_in = params.at("scorer.b_in");
  w_dw = params.at("scorer.w_dw");
  b_dw = params.at("scorer.b_dw");
  w_out = params.at("scorer.w_out");
  b_out = params.at("scorer.b_out");
  bn1.gamma = params.at("scorer.bn1.gamma");
  bn1.beta = params.at("scorer.bn1.beta");
  bn2.gamma = params.at("scorer.bn2.gamma");
  bn2.beta = params.at("scorer.bn2.beta");
  bn1.running_mean = params.at("scorer.bn1.running_mean");
  bn1.running_var = params.at("scorer.bn1.running_var");
  bn2.running_mean = params.at("scorer.bn2.running_mean");
  bn2.running_var = params.at("scorer.bn2.running_var");
  hidden = static_cast<int>(b_in.numel());
}

ParamMap scorer_trainable(const ScorerParams& p) { return p.trainable(); }

NodeId scorer_forward(Graph& g, NodeId features, const std::map<std::string, NodeId>& nodes, ScorerParams& state,
                      int h, int w, bool training) {
  NodeId x = g.linear(features, nodes.at("scorer.w_in"), nodes.at("scorer.b_in"));
  x = g.batch_norm(x, nodes.at("scorer.bn1.gamma"), nodes.at("scorer.bn1.beta"), state.bn1.running_mean,
                   state.bn1.running_var, training);
  x = g.gelu(x);
  x = g.add_rowvec(g.depthwise3x3(x, nodes.at("scorer.w_dw"), h, w), nodes.at("scorer.b_dw"));
  x = g.batch_norm(x, nodes.at("scorer.bn2.gamma"), nodes.at("scorer.bn2.beta"), state.bn2.running_mean,
                   state.bn2.running_var, training);
  x = g.gelu(x);
  x = g.linear(x, nodes.at("scorer.w_out"), nodes.at("scorer.b_out"));
  return g.sigmoid(x);
}

NodeId distill_loss(Graph& g, const std::vector<NodeId>& frame_scores, const SaliencyMap& target) {
  if (static_cast<int>(frame_scores.size()) != target.frames())
    throw std::runtime_error("distill: frame count mismatch");
  constexpr double kEps = 1e-7;
  std::vector<NodeId> per_frame;
  per_frame.reserve(frame_scores.size());
  for (int f = 0; f < target.frames(); ++f) {
    const int p = target.patches();
    if (g.value(frame_scores[f]).numel() != p) throw std::runtime_error("distill: score length mismatch");
    std::vector<double> tgt(p), one_minus_tgt(p);
    for (int i = 0; i < p; ++i) {
      tgt[i] = target.at(f, i);
      one_minus_tgt[i] = 1.0 - tgt[i];
    }
    NodeId t = g.constant(Tensor({p, 1}, std::move(tgt)));
    NodeId omt = g.constant(Tensor({p, 1}, std::move(one_minus_tgt)));
    NodeId s = g.clamp(frame_scores[f], kEps, 1.0 - kEps);
    NodeId oms = g.clamp(g.add_const(g.scale(frame_scores[f], -1.0), 1.0), kEps, 1.0 - kEps);
    NodeId ll = g.add(g.mul(t, g.log(s)), g.mul(omt, g.log(oms)));
    per_frame.push_back(ll);
  }
  return g.scale(g.mean_all(g.concat_rows(per_frame)), -1.0);
}

SaliencyMap score_frames(const std::vector<TokenGrid>& grids, ScorerParams& params, const BackboneConfig& cfg,
                         bool training) {
  SaliencyMap map;
  map.kind = SaliencyKind::Predicted;
  map.scores = Tensor({static_cast<int>(grids.size()), cfg.patches()});
  for (size_t f = 0; f < grids.size(); ++f) {
    Graph g;
    auto nodes = register_params(g, params.trainable());
    NodeId s = scorer_forward(g, g.constant(grids[f].patches), nodes, params, cfg.grid_h, cfg.grid_w, training);
    const Tensor& sv = g.value(s);
    for (int i = 0; i < cfg.patches(); ++i) map.scores.at(static_cast<int>(f), i) = sv[i];
  }
  return map;
}

}  // namespace precut

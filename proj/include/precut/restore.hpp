#pragma once

#include <string>

#include "precut/backbone.hpp"
#include "precut/graph.hpp"
#include "precut/router.hpp"

namespace precut {

enum class RestoreVariant { CrossAttention, ZeroFill, Bilinear };

std::string restore_variant_name(RestoreVariant v);
RestoreVariant restore_variant_from_name(const std::string& name);

// Learned per-frame restoration: full-resolution encoder features query the
// surviving processed tokens (keys from the same encoder features of the kept
// rows, values from the backbone outputs), multi-head, no residual path.
struct RestorationParams {
  int feature_dim = 0;   // encoder feature width (query/key source)
  int model_dim = 0;     // backbone output width (value source / output)
  int attn_dim = 32;
  int heads = 4;
  Tensor wq, bq;  // [feature_dim x attn_dim], [attn_dim]
  Tensor wk, bk;
  Tensor wv, bv;  // [model_dim x attn_dim], [attn_dim]
  Tensor wo, bo;  // [attn_dim x model_dim], [model_dim]

  void init(int feature_dim_in, int model_dim_in, int attn_dim_in, int heads_in, Rng& rng);
  static long long count_for(int feature_dim_in, int model_dim_in, int attn_dim_in);
  long long param_count() const;
  std::map<std::string, Tensor> state() const;         // keys "restore.*"
  void load_state(const std::map<std::string, Tensor>& st);
};

struct RestoreNodes {
  NodeId wq, bq, wk, bk, wv, bv, wo, bo;
};

RestoreNodes register_restore_params(Graph& g, RestorationParams& p);

// full_features: [P x feature_dim] node, kept_features: [K x feature_dim],
// kept_values: [K x model_dim]; returns [P x model_dim].
NodeId restore_frame(Graph& g, NodeId full_features, NodeId kept_features, NodeId kept_values,
                     const RestoreNodes& nodes, int attn_dim, int heads);

// Constant [P x K] scatter matrices for the ablation variants; multiplying a
// [K x model_dim] survivor block by either lifts it back to the full grid.
Tensor zero_fill_matrix(const std::vector<int>& keep, int patches);
Tensor bilinear_matrix(const std::vector<int>& keep, int grid_h, int grid_w);

}  // namespace precut

#include "precut/restore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace precut {

std::string restore_variant_name(RestoreVariant v) {
  switch (v) {
    case RestoreVariant::CrossAttention: return "cross-attention";
    case RestoreVariant::ZeroFill: return "zero-fill";
    case RestoreVariant::Bilinear: return "bilinear";
  }
  throw std::runtime_error("unknown restoration variant");
}

RestoreVariant restore_variant_from_name(const std::string& name) {
  if (name == "cross-attention") return RestoreVariant::CrossAttention;
  if (name == "zero-fill") return RestoreVariant::ZeroFill;
  if (name == "bilinear") return RestoreVariant::Bilinear;
  throw std::runtime_error("unknown restoration variant name: " + name);
}

namespace {

Tensor dense_init(int rows, int cols, Rng& rng) {
  Tensor w = Tensor::zeros({rows, cols});
  const double std = 1.0 / std::sqrt(static_cast<double>(rows));
  for (int i = 0; i < w.numel(); ++i) w.data()[i] = rng.normal() * std;
  return w;
}

}  // namespace

void RestorationParams::init(int feature_dim_in, int model_dim_in, int attn_dim_in, int heads_in, Rng& rng) {
  if (attn_dim_in % heads_in != 0) {
    throw std::runtime_error("restoration attention width must divide evenly across heads");
  }
  feature_dim = feature_dim_in;
  model_dim = model_dim_in;
  attn_dim = attn_dim_in;
  heads = heads_in;
  wq = dense_init(feature_dim, attn_dim, rng);
  bq = Tensor::zeros({attn_dim});
  wk = dense_init(feature_dim, attn_dim, rng);
  bk = Tensor::zeros({attn_dim});
  wv = dense_init(model_dim, attn_dim, rng);
  bv = Tensor::zeros({attn_dim});
  wo = dense_init(attn_dim, model_dim, rng);
  bo = Tensor::zeros({model_dim});
}

long long RestorationParams::count_for(int feature_dim_in, int model_dim_in, int attn_dim_in) {
  long long total = 0;
  total += static_cast<long long>(feature_dim_in) * attn_dim_in + attn_dim_in;  // Q
  total += static_cast<long long>(feature_dim_in) * attn_dim_in + attn_dim_in;  // K
  total += static_cast<long long>(model_dim_in) * attn_dim_in + attn_dim_in;    // V
  total += static_cast<long long>(attn_dim_in) * model_dim_in + model_dim_in;   // out
  return total;
}

long long RestorationParams::param_count() const { return count_for(feature_dim, model_dim, attn_dim); }

std::map<std::string, Tensor> RestorationParams::state() const {
  return {
      {"restore.wq", wq}, {"restore.bq", bq}, {"restore.wk", wk}, {"restore.bk", bk},
      {"restore.wv", wv}, {"restore.bv", bv}, {"restore.wo", wo}, {"restore.bo", bo},
  };
}

void RestorationParams::load_state(const std::map<std::string, Tensor>& st) {
  wq = st.at("restore.wq");
  bq = st.at("restore.bq");
  wk = st.at("restore.wk");
  bk = st.at("restore.bk");
  wv = st.at("restore.wv");
  bv = st.at("restore.bv");
  wo = st.at("restore.wo");
  bo = st.at("restore.bo");
  feature_dim = wq.rows();
  model_dim = wv.rows();
  attn_dim = wq.cols();
}

RestoreNodes register_restore_params(Graph& g, RestorationParams& p) {
  RestoreNodes n;
  n.wq = g.parameter(p.wq, "restore.wq");
  n.bq = g.parameter(p.bq, "restore.bq");
  n.wk = g.parameter(p.wk, "restore.wk");
  n.bk = g.parameter(p.bk, "restore.bk");
  n.wv = g.parameter(p.wv, "restore.wv");
  n.bv = g.parameter(p.bv, "restore.bv");
  n.wo = g.parameter(p.wo, "restore.wo");
  n.bo = g.parameter(p.bo, "restore.bo");
  return n;
}

NodeId restore_frame(Graph& g, NodeId full_features, NodeId kept_features, NodeId kept_values,
                     const RestoreNodes& nodes, int attn_dim, int heads) {
  if (attn_dim % heads != 0) {
    throw std::runtime_error("restore_frame: attention width must divide evenly across heads");
  }
  const int dh = attn_dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  NodeId q = g.linear(full_features, nodes.wq, nodes.bq);
  NodeId k = g.linear(kept_features, nodes.wk, nodes.bk);
  NodeId v = g.linear(kept_values, nodes.wv, nodes.bv);
  std::vector<NodeId> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    NodeId qh = g.slice_cols(q, h * dh, dh);
    NodeId kh = g.slice_cols(k, h * dh, dh);
    NodeId vh = g.slice_cols(v, h * dh, dh);
    NodeId logits = g.scale(g.matmul(qh, g.transpose(kh)), scale);
    NodeId attn = g.softmax_rows(logits);
    head_outs.push_back(g.matmul(attn, vh));
  }
  return g.linear(g.concat_cols(head_outs), nodes.wo, nodes.bo);
}

Tensor zero_fill_matrix(const std::vector<int>& keep, int patches) {
  Tensor m = Tensor::zeros({patches, static_cast<int>(keep.size())});
  for (size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= patches) throw std::runtime_error("zero_fill_matrix: keep index out of range");
    m.at(keep[k], static_cast<int>(k)) = 1.0;
  }
  return m;
}

Tensor bilinear_matrix(const std::vector<int>& keep, int grid_h, int grid_w) {
  const int patches = grid_h * grid_w;
  if (keep.empty()) throw std::runtime_error("bilinear_matrix: need at least one kept token");
  Tensor m = Tensor::zeros({patches, static_cast<int>(keep.size())});
  std::vector<char> kept_slot(static_cast<size_t>(patches), 0);
  std::vector<int> slot_of(static_cast<size_t>(patches), -1);
  for (size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= patches) throw std::runtime_error("bilinear_matrix: keep index out of range");
    kept_slot[static_cast<size_t>(keep[k])] = 1;
    slot_of[static_cast<size_t>(keep[k])] = static_cast<int>(k);
  }
  for (int p = 0; p < patches; ++p) {
    if (kept_slot[static_cast<size_t>(p)]) {
      m.at(p, slot_of[static_cast<size_t>(p)]) = 1.0;
      continue;
    }
    const int py = p / grid_w;
    const int px = p % grid_w;
    // Four nearest kept cells by grid distance (ties to the lower flat
    // index), blended with inverse-distance weights.
    struct Cand {
      double dist;
      int flat;
    };
    std::vector<Cand> cands;
    cands.reserve(keep.size());
    for (int idx : keep) {
      const int ky = idx / grid_w;
      const int kx = idx % grid_w;
      const double dy = static_cast<double>(py - ky);
      const double dx = static_cast<double>(px - kx);
      cands.push_back({std::sqrt(dy * dy + dx * dx), idx});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      return a.flat < b.flat;
    });
    const size_t take = std::min<size_t>(4, cands.size());
    double wsum = 0.0;
    for (size_t i = 0; i < take; ++i) wsum += 1.0 / cands[i].dist;
    for (size_t i = 0; i < take; ++i) {
      const double w = (1.0 / cands[i].dist) / wsum;
      m.at(p, slot_of[static_cast<size_t>(cands[i].flat)]) = w;
    }
  }
  return m;
}

}  // namespace precut

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "precut/checkpoint.hpp"
#include "precut/engine.hpp"
#include "precut/scene.hpp"

namespace precut {

struct BackboneConfig {
  int frames = 4;
  int grid_h = 8;
  int grid_w = 8;
  int input_dim = 32;   // token width after the patch encoder
  int model_dim = 48;   // width inside the attention stack
  int layers = 4;
  int heads = 4;
  int registers = 4;
  // Multiplier on global-attention logit magnitudes at init. 1 keeps the
  // plain random init, whose attention rows are nearly uniform; larger values
  // emulate the concentrated attention maps of a converged geometry model,
  // which is what attention-derived saliency assumes upstream. Frame
  // attention is left at the plain scale (saliency never reads it).
  double qk_gain = 1.0;

  int patches() const { return grid_h * grid_w; }
  int head_dim() const { return model_dim / heads; }
  int tokens_per_frame() const { return patches() + 1 + registers; }
  void validate() const;
};

enum class TokenRole : uint8_t { Patch, Camera, Register };

// Row bookkeeping for a token sequence: which frame each row belongs to, its
// role, and (for patches) the flat grid index it came from. Rows are
// frame-major: every frame contributes its patches (ascending flat index),
// then its camera token, then its registers.
struct TokenLayout {
  int frames = 0;
  std::vector<TokenRole> role;
  std::vector<int> frame;
  std::vector<int> patch_index;
  std::vector<std::pair<int, int>> span;  // per frame [begin, end)

  int size() const { return static_cast<int>(role.size()); }
  int camera_row(int f) const;
  std::vector<int> patch_rows(int f) const;
  int total_patches() const;
};

// One encoded frame before the attention stack.
struct TokenGrid {
  int frame = 0;
  Tensor patches;    // [P x D]
  Tensor camera;     // [1 x D]
  Tensor registers;  // [R x D]
};

struct EncoderParams {
  Tensor proj;            // [C_in x D], bias-free so empty input encodes to the positional field alone
  Tensor camera_embed;    // [1 x D]
  Tensor register_embed;  // [R x D]

  static EncoderParams init(const BackboneConfig& cfg, int channels, uint64_t seed);
  static size_t count_for(const BackboneConfig& cfg, int channels);
  void to_params(ParamMap& out, const std::string& prefix) const;
};

Tensor sinusoidal_grid_embedding(int h, int w, int dim);

std::vector<TokenGrid> encode_frames(const ClipSample& clip, const BackboneConfig& cfg, const EncoderParams& enc);

// Frame-major sequence assembly from encoded grids.
struct SequenceBatch {
  Tensor tokens;  // [T x D]
  TokenLayout layout;
};
SequenceBatch make_full_sequence(const std::vector<TokenGrid>& grids, const BackboneConfig& cfg);

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockParams {
  AttentionWeights frame_attn;
  AttentionWeights global_attn;
};

struct BackboneParams {
  Tensor entry_w, entry_b;  // D -> D'
  std::vector<BlockParams> blocks;

  static BackboneParams init(const BackboneConfig& cfg, uint64_t seed);
  // Parameter count at an arbitrary config, computed without allocating.
  static size_t count_for(const BackboneConfig& cfg);
  size_t param_count() const;
  void to_params(ParamMap& out, const std::string& prefix) const;
};

// Captured global-attention weights of one full forward pass: row-stochastic
// [T x T] per (layer, head), rows indexed like `layout`.
struct AttentionTrace {
  int layers = 0;
  int heads = 0;
  TokenLayout layout;
  std::vector<Tensor> weights;

  const Tensor& at(int layer, int head) const {
    if (layer < 0 || layer >= layers || head < 0 || head >= heads) throw std::runtime_error("trace: index out of range");
    return weights[static_cast<size_t>(layer) * heads + head];
  }
};

// Multiply-accumulate counted as 2 FLOPs. Attention buckets hold only the
// token-pair (quadratic) work; projections hold every linear map. The patch
// bucket is the share of global-attention pair work where both query and key
// are patch tokens, which is the part token reduction controls.
struct FlopCount {
  double total = 0;
  double projections = 0;
  double frame_attn_pairs = 0;
  double global_attn_pairs = 0;
  double global_attn_patch_pairs = 0;
};

// Simulated mid-stack reduction: after `after_layer` blocks the sequence is
// cut to `rows` (indices into the incoming layout) and the remaining blocks
// run on `layout`. Used for cost comparisons only.
struct MidCut {
  int after_layer = 0;
  std::vector<int> rows;
  TokenLayout layout;
};

namespace detail {

template <class E>
typename E::Handle multihead_attention(E& eng, typename E::Handle x, int rows, int patch_rows,
                                       const AttentionWeights& w, int heads, FlopCount* flops, bool global_bucket,
                                       const std::function<void(int, Tensor)>& capture) {
  const int dm = w.wq.cols();
  const int dh = dm / heads;
  auto q = eng.add_rowvec(eng.matmul(x, eng.constant(w.wq)), eng.constant(w.bq));
  auto k = eng.add_rowvec(eng.matmul(x, eng.constant(w.wk)), eng.constant(w.bk));
  auto v = eng.add_rowvec(eng.matmul(x, eng.constant(w.wv)), eng.constant(w.bv));
  if (flops) {
    flops->projections += 3.0 * 2.0 * rows * dm * dm;
    flops->total += 3.0 * 2.0 * rows * dm * dm;
  }
  std::vector<typename E::Handle> head_outs;
  head_outs.reserve(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    auto qh = eng.slice_cols(q, h * dh, dh);
    auto kh = eng.slice_cols(k, h * dh, dh);
    auto vh = eng.slice_cols(v, h * dh, dh);
    auto scores = eng.scale(eng.matmul(qh, eng.transpose(kh)), inv_sqrt);
    auto attn = eng.softmax_rows(scores);
    if (capture) capture(h, eng.materialize(attn));
    head_outs.push_back(eng.matmul(attn, vh));
    if (flops) {
      const double pair_flops = 4.0 * static_cast<double>(rows) * rows * dh;
      (global_bucket ? flops->global_attn_pairs : flops->frame_attn_pairs) += pair_flops;
      if (global_bucket) flops->global_attn_patch_pairs += 4.0 * static_cast<double>(patch_rows) * patch_rows * dh;
      flops->total += pair_flops;
    }
  }
  auto out = eng.add_rowvec(eng.matmul(eng.concat_cols(head_outs), eng.constant(w.wo)), eng.constant(w.bo));
  if (flops) {
    flops->projections += 2.0 * rows * dm * dm;
    flops->total += 2.0 * rows * dm * dm;
  }
  return out;
}

}  // namespace detail

// The alternating stack: each block pairs per-frame self-attention with
// self-attention over the concatenated sequence, both pre-norm residual.
// Global attention weights land in `trace` when it is non-null.
template <class E>
typename E::Handle backbone_forward(E& eng, typename E::Handle tokens, const TokenLayout& layout_in,
                                    const BackboneParams& p, const BackboneConfig& cfg,
                                    AttentionTrace* trace = nullptr, FlopCount* flops = nullptr,
                                    const MidCut* cut = nullptr) {
  cfg.validate();
  if (trace && cut) throw std::runtime_error("backbone: capture is a full-sequence feature");
  const TokenLayout* layout = &layout_in;
  if (trace) {
    trace->layers = cfg.layers;
    trace->heads = cfg.heads;
    trace->layout = layout_in;
    trace->weights.clear();
  }
  auto x = eng.add_rowvec(eng.matmul(tokens, eng.constant(p.entry_w)), eng.constant(p.entry_b));
  if (flops) {
    const double f = 2.0 * layout->size() * cfg.input_dim * cfg.model_dim;
    flops->projections += f;
    flops->total += f;
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const BlockParams& blk = p.blocks[l];
    // frame attention
    auto normed = eng.layer_norm_rows(x);
    std::vector<typename E::Handle> frame_outs;
    frame_outs.reserve(layout->frames);
    for (int f = 0; f < layout->frames; ++f) {
      const auto [begin, end] = layout->span[f];
      auto xf = eng.slice_rows(normed, begin, end - begin);
      frame_outs.push_back(
          detail::multihead_attention(eng, xf, end - begin, 0, blk.frame_attn, cfg.heads, flops, false, nullptr));
    }
    x = eng.add(x, eng.concat_rows(frame_outs));
    // global attention
    auto normed2 = eng.layer_norm_rows(x);
    std::function<void(int, Tensor)> capture;
    if (trace) {
      capture = [trace](int, Tensor t) { trace->weights.push_back(std::move(t)); };
    }
    auto attn_out = detail::multihead_attention(eng, normed2, layout->size(), layout->total_patches(),
                                                blk.global_attn, cfg.heads, flops, true, capture);
    x = eng.add(x, attn_out);

    if (cut && cut->after_layer == l + 1 && l + 1 < cfg.layers) {
      x = eng.gather_rows(x, cut->rows);
      layout = &cut->layout;
    }
  }
  return eng.layer_norm_rows(x);
}

}  // namespace precut

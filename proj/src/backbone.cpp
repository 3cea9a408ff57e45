#include "precut/backbone.hpp"

#include <cmath>

namespace precut {

void BackboneConfig::validate() const {
  if (frames < 1 || grid_h < 1 || grid_w < 1) throw std::runtime_error("backbone: bad grid config");
  if (layers < 1 || heads < 1 || registers < 0) throw std::runtime_error("backbone: bad stack config");
  if (model_dim % heads != 0) throw std::runtime_error("backbone: model_dim must divide into heads");
  if (input_dim % 4 != 0) throw std::runtime_error("backbone: input_dim must be divisible by 4 for the positional field");
  if (!(qk_gain > 0.0)) throw std::runtime_error("backbone: qk_gain must be positive");
}

int TokenLayout::camera_row(int f) const {
  const auto [begin, end] = span.at(f);
  for (int i = begin; i < end; ++i)
    if (role[i] == TokenRole::Camera) return i;
  throw std::runtime_error("layout: frame has no camera token");
}

std::vector<int> TokenLayout::patch_rows(int f) const {
  const auto [begin, end] = span.at(f);
  std::vector<int> rows;
  for (int i = begin; i < end; ++i)
    if (role[i] == TokenRole::Patch) rows.push_back(i);
  return rows;
}

int TokenLayout::total_patches() const {
  int n = 0;
  for (TokenRole r : role) n += r == TokenRole::Patch ? 1 : 0;
  return n;
}

Tensor sinusoidal_grid_embedding(int h, int w, int dim) {
  if (dim % 4 != 0) throw std::runtime_error("positional field: dim must be divisible by 4");
  const int quarter = dim / 4;
  Tensor out({h * w, dim});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      for (int k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / quarter);
        out.at(p, 4 * k + 0) = std::sin(y * omega);
        out.at(p, 4 * k + 1) = std::cos(y * omega);
        out.at(p, 4 * k + 2) = std::sin(x * omega);
        out.at(p, 4 * k + 3) = std::cos(x * omega);
      }
    }
  return out;
}

EncoderParams EncoderParams::init(const BackboneConfig& cfg, int channels, uint64_t seed) {
  Rng rng = Rng(seed).fork(11);
  EncoderParams enc;
  enc.proj = Tensor::randn({channels, cfg.input_dim}, rng, 1.0 / std::sqrt(static_cast<double>(channels)));
  enc.camera_embed = Tensor::randn({1, cfg.input_dim}, rng);
  enc.register_embed = Tensor::randn({cfg.registers, cfg.input_dim}, rng);
  return enc;
}

size_t EncoderParams::count_for(const BackboneConfig& cfg, int channels) {
  return static_cast<size_t>(channels) * cfg.input_dim + static_cast<size_t>(1 + cfg.registers) * cfg.input_dim;
}

void EncoderParams::to_params(ParamMap& out, const std::string& prefix) const {
  out[prefix + "proj"] = proj;
  out[prefix + "camera_embed"] = camera_embed;
  out[prefix + "register_embed"] = register_embed;
}

std::vector<TokenGrid> encode_frames(const ClipSample& clip, const BackboneConfig& cfg, const EncoderParams& enc) {
  cfg.validate();
  if (clip.h != cfg.grid_h || clip.w != cfg.grid_w)
    throw std::runtime_error("encode: clip resolution does not match backbone grid");
  if (clip.channels != enc.proj.rows()) throw std::runtime_error("encode: clip channel count does not match encoder");
  const Tensor pos = sinusoidal_grid_embedding(cfg.grid_h, cfg.grid_w, cfg.input_dim);
  std::vector<TokenGrid> grids;
  grids.reserve(clip.frames);
  for (int f = 0; f < clip.frames; ++f) {
    TokenGrid g;
    g.frame = f;
    g.patches = add(matmul(clip.images[f], enc.proj), pos);
    g.camera = enc.camera_embed;
    g.registers = enc.register_embed;
    grids.push_back(std::move(g));
  }
  return grids;
}

SequenceBatch make_full_sequence(const std::vector<TokenGrid>& grids, const BackboneConfig& cfg) {
  SequenceBatch seq;
  seq.layout.frames = static_cast<int>(grids.size());
  std::vector<Tensor> parts;
  int row = 0;
  for (const TokenGrid& g : grids) {
    const int p = g.patches.rows();
    const int r = g.registers.rows();
    seq.layout.span.emplace_back(row, row + p + 1 + r);
    for (int i = 0; i < p; ++i) {
      seq.layout.role.push_back(TokenRole::Patch);
      seq.layout.frame.push_back(g.frame);
      seq.layout.patch_index.push_back(i);
    }
    seq.layout.role.push_back(TokenRole::Camera);
    seq.layout.frame.push_back(g.frame);
    seq.layout.patch_index.push_back(-1);
    for (int i = 0; i < r; ++i) {
      seq.layout.role.push_back(TokenRole::Register);
      seq.layout.frame.push_back(g.frame);
      seq.layout.patch_index.push_back(-1);
    }
    row += p + 1 + r;
    parts.push_back(g.patches);
    parts.push_back(g.camera);
    parts.push_back(g.registers);
  }
  (void)cfg;
  seq.tokens = concat_rows(parts);
  return seq;
}

namespace {

AttentionWeights init_attention(Rng& rng, int dm, double qk_gain) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dm));
  // sqrt on each side so the q.k product scales by qk_gain overall
  const double sq = s * std::sqrt(qk_gain);
  AttentionWeights w;
  w.wq = Tensor::randn({dm, dm}, rng, sq);
  w.bq = Tensor::zeros({dm});
  w.wk = Tensor::randn({dm, dm}, rng, sq);
  w.bk = Tensor::zeros({dm});
  w.wv = Tensor::randn({dm, dm}, rng, s);
  w.bv = Tensor::zeros({dm});
  w.wo = Tensor::randn({dm, dm}, rng, s);
  w.bo = Tensor::zeros({dm});
  return w;
}

void attention_to_params(const AttentionWeights& w, ParamMap& out, const std::string& prefix) {
  out[prefix + "wq"] = w.wq;
  out[prefix + "bq"] = w.bq;
  out[prefix + "wk"] = w.wk;
  out[prefix + "bk"] = w.bk;
  out[prefix + "wv"] = w.wv;
  out[prefix + "bv"] = w.bv;
  out[prefix + "wo"] = w.wo;
  out[prefix + "bo"] = w.bo;
}

}  // namespace

BackboneParams BackboneParams::init(const BackboneConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng = Rng(seed).fork(13);
  BackboneParams p;
  p.entry_w = Tensor::randn({cfg.input_dim, cfg.model_dim}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.input_dim)));
  p.entry_b = Tensor::zeros({cfg.model_dim});
  for (int l = 0; l < cfg.layers; ++l) {
    BlockParams blk;
    blk.frame_attn = init_attention(rng, cfg.model_dim, 1.0);
    blk.global_attn = init_attention(rng, cfg.model_dim, cfg.qk_gain);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

size_t BackboneParams::count_for(const BackboneConfig& cfg) {
  const size_t dm = static_cast<size_t>(cfg.model_dim);
  const size_t per_attention = 4 * dm * dm + 4 * dm;
  return static_cast<size_t>(cfg.input_dim) * dm + dm + static_cast<size_t>(cfg.layers) * 2 * per_attention;
}

size_t BackboneParams::param_count() const {
  size_t n = static_cast<size_t>(entry_w.numel() + entry_b.numel());
  for (const BlockParams& b : blocks)
    for (const AttentionWeights* w : {&b.frame_attn, &b.global_attn})
      n += static_cast<size_t>(w->wq.numel() + w->bq.numel() + w->wk.numel() + w->bk.numel() + w->wv.numel() +
                               w->bv.numel() + w->wo.numel() + w->bo.numel());
  return n;
}

void BackboneParams::to_params(ParamMap& out, const std::string& prefix) const {
  out[prefix + "entry_w"] = entry_w;
  out[prefix + "entry_b"] = entry_b;
  for (size_t l = 0; l < blocks.size(); ++l) {
    const std::string base = prefix + "block" + std::to_string(l) + ".";
    attention_to_params(blocks[l].frame_attn, out, base + "frame.");
    attention_to_params(blocks[l].global_attn, out, base + "global.");
  }
}

}  // namespace precut

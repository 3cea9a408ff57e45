#include "precut/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace precut {

std::string bench_mode_name(BenchMode mode) {
  switch (mode) {
    case BenchMode::Full: return "full";
    case BenchMode::PreReduce: return "pre-reduce";
    case BenchMode::MidReduce: return "mid-reduce";
  }
  throw std::runtime_error("unknown bench mode");
}

namespace {

// Eager mirror of the learned restoration (bench paths avoid the tape).
Tensor restore_eager(const Tensor& full_feat, const Tensor& kept_feat, const Tensor& kept_values,
                     const RestorationParams& p) {
  const int dh = p.attn_dim / p.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = add_rowvec(matmul(full_feat, p.wq), p.bq);
  Tensor k = add_rowvec(matmul(kept_feat, p.wk), p.bk);
  Tensor v = add_rowvec(matmul(kept_values, p.wv), p.bv);
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor attn = softmax_rows(scale(matmul(qh, transposed(kh)), inv_sqrt));
    head_outs.push_back(matmul(attn, vh));
  }
  return add_rowvec(matmul(concat_cols(head_outs), p.wo), p.bo);
}

// Rows of the full layout that survive the plan's keep sets (camera and
// register rows always survive).
std::vector<int> surviving_rows(const TokenLayout& layout, const RoutingPlan& plan) {
  std::vector<int> rows;
  for (int f = 0; f < layout.frames; ++f) {
    const auto& keep = plan.frames[static_cast<size_t>(f)].keep;
    const auto [begin, end] = layout.span[static_cast<size_t>(f)];
    for (int i = begin; i < end; ++i) {
      if (layout.role[static_cast<size_t>(i)] != TokenRole::Patch) {
        rows.push_back(i);
        continue;
      }
      const int pid = layout.patch_index[static_cast<size_t>(i)];
      if (std::binary_search(keep.begin(), keep.end(), pid)) rows.push_back(i);
    }
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

double checksum(const Tensor& t) {
  double s = 0;
  for (int64_t i = 0; i < t.numel(); ++i) s += t.data()[i];
  return s;
}

}  // namespace

BenchRecord bench_pipeline(const FrozenModel& model, const ClipSample& clip, ScorerParams& scorer,
                           RestorationParams& restore, const PipelineSettings& s, BenchMode mode, int warmups,
                           int reps) {
  if (reps < 1) throw std::runtime_error("bench: need at least one timed repetition");
  const BackboneConfig& cfg = model.cfg;
  BenchRecord rec;
  rec.mode = bench_mode_name(mode);
  rec.frames = cfg.frames;
  rec.patches = cfg.patches();
  rec.keep_ratio = s.keep_ratio;
  if (mode == BenchMode::MidReduce) rec.cut_after_layer = cfg.layers / 2;

  // Fixed inputs: scoring sees the same encoder features every repetition, so
  // the plan is computed once, outside the timed region, for bookkeeping, and
  // again inside it when the mode pays for scoring.
  auto grids = encode_frames(clip, cfg, model.enc);
  SequenceBatch full_seq = make_full_sequence(grids, cfg);
  rec.rows_full = full_seq.layout.size();

  SaliencyMap scored = score_frames(grids, scorer, cfg, /*training=*/false);
  RoutingPlan plan = route(grids, scored, s.keep_ratio, s.merge_fraction, s.mode);

  std::vector<std::vector<int>> kept;
  for (const FrameRoute& fr : plan.frames) kept.push_back(fr.keep);
  TokenLayout reduced = kept_layout(cfg.frames, cfg.registers, kept);

  MidCut cut;
  cut.after_layer = cfg.layers / 2;
  cut.rows = surviving_rows(full_seq.layout, plan);
  cut.layout = kept_layout(cfg.frames, cfg.registers, kept);

  // FLOP accounting once, outside the timing loop.
  {
    EagerEngine eng;
    switch (mode) {
      case BenchMode::Full: {
        backbone_forward(eng, full_seq.tokens, full_seq.layout, model.bb, cfg, nullptr, &rec.flops);
        rec.rows_reduced = rec.rows_full;
        break;
      }
      case BenchMode::PreReduce: {
        std::vector<Tensor> parts;
        for (int f = 0; f < cfg.frames; ++f) {
          Tensor scores_col = Tensor::zeros({cfg.patches(), 1});
          for (int p = 0; p < cfg.patches(); ++p) scores_col.at(p, 0) = scored.at(f, p);
          parts.push_back(merge_frame(grids[static_cast<size_t>(f)].patches, scores_col,
                                      plan.frames[static_cast<size_t>(f)]));
          parts.push_back(grids[static_cast<size_t>(f)].camera);
          parts.push_back(grids[static_cast<size_t>(f)].registers);
        }
        backbone_forward(eng, concat_rows(parts), reduced, model.bb, cfg, nullptr, &rec.flops);
        rec.rows_reduced = reduced.size();
        break;
      }
      case BenchMode::MidReduce: {
        backbone_forward(eng, full_seq.tokens, full_seq.layout, model.bb, cfg, nullptr, &rec.flops, &cut);
        rec.rows_reduced = cut.layout.size();
        break;
      }
    }
  }

  volatile double sink = 0;
  std::vector<double> times;
  times.reserve(static_cast<size_t>(reps));
  for (int it = 0; it < warmups + reps; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    EagerEngine eng;
    auto run_grids = encode_frames(clip, cfg, model.enc);
    double local = 0;
    switch (mode) {
      case BenchMode::Full: {
        SequenceBatch seq = make_full_sequence(run_grids, cfg);
        Tensor out = backbone_forward(eng, seq.tokens, seq.layout, model.bb, cfg);
        local = checksum(out);
        break;
      }
      case BenchMode::PreReduce: {
        SaliencyMap sc = score_frames(run_grids, scorer, cfg, false);
        RoutingPlan pl = route(run_grids, sc, s.keep_ratio, s.merge_fraction, s.mode);
        std::vector<Tensor> parts;
        std::vector<Tensor> merged_feats;
        for (int f = 0; f < cfg.frames; ++f) {
          Tensor scores_col = Tensor::zeros({cfg.patches(), 1});
          for (int p = 0; p < cfg.patches(); ++p) scores_col.at(p, 0) = sc.at(f, p);
          merged_feats.push_back(merge_frame(run_grids[static_cast<size_t>(f)].patches, scores_col,
                                             pl.frames[static_cast<size_t>(f)]));
          parts.push_back(merged_feats.back());
          parts.push_back(run_grids[static_cast<size_t>(f)].camera);
          parts.push_back(run_grids[static_cast<size_t>(f)].registers);
        }
        std::vector<std::vector<int>> kp;
        for (const FrameRoute& fr : pl.frames) kp.push_back(fr.keep);
        TokenLayout lay = kept_layout(cfg.frames, cfg.registers, kp);
        Tensor out = backbone_forward(eng, concat_rows(parts), lay, model.bb, cfg);
        const bool full_keep = static_cast<int>(kp[0].size()) == cfg.patches();
        for (int f = 0; f < cfg.frames; ++f) {
          Tensor survivors = gather_rows(out, lay.patch_rows(f));
          Tensor restored = full_keep ? survivors
                                      : restore_eager(run_grids[static_cast<size_t>(f)].patches,
                                                      merged_feats[static_cast<size_t>(f)], survivors, restore);
          local += checksum(restored);
        }
        break;
      }
      case BenchMode::MidReduce: {
        SequenceBatch seq = make_full_sequence(run_grids, cfg);
        Tensor out = backbone_forward(eng, seq.tokens, seq.layout, model.bb, cfg, nullptr, nullptr, &cut);
        local = checksum(out);
        break;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + local;
    if (it >= warmups) {
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  std::sort(times.begin(), times.end());
  rec.wall_ms = times[times.size() / 2];
  if (times.size() % 2 == 0) rec.wall_ms = 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
  return rec;
}

}  // namespace precut

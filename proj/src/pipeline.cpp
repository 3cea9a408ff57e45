#include "precut/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace precut {

FrozenModel FrozenModel::init(const BackboneConfig& cfg, int channels, uint64_t seed, bool calibrate_heads) {
  cfg.validate();
  FrozenModel m;
  m.cfg = cfg;
  m.channels = channels;
  m.seed = seed;
  m.enc = EncoderParams::init(cfg, channels, seed);
  m.bb = BackboneParams::init(cfg, seed);
  m.heads = HeadParams::init(cfg.model_dim, seed ^ 0x9e3779b97f4a7c15ULL);
  if (!calibrate_heads) return m;

  // Calibrate the frozen readouts once, on clips reserved for this purpose,
  // so the task losses measure reconstruction damage rather than the error of
  // an arbitrary random projection.
  SceneConfig scene{cfg.frames, cfg.grid_h, cfg.grid_w, channels, 1, 3};
  std::vector<Tensor> xs, ys, xcam, ycam;
  for (uint64_t i = 0; i < 8; ++i) {
    ClipSample clip = generate_clip(scene, seed ^ (0xCA11B7A7E5EEDULL + i));
    auto grids = encode_frames(clip, cfg, m.enc);
    SequenceBatch seq = make_full_sequence(grids, cfg);
    EagerEngine eng;
    Tensor out = backbone_forward(eng, seq.tokens, seq.layout, m.bb, cfg);
    for (int f = 0; f < cfg.frames; ++f) {
      xs.push_back(gather_rows(out, seq.layout.patch_rows(f)));
      ys.push_back(concat_cols({clip.depth[static_cast<size_t>(f)], clip.pointmap[static_cast<size_t>(f)]}));
      xcam.push_back(gather_rows(out, {seq.layout.camera_row(f)}));
      ycam.push_back(slice_rows(clip.cameras, f, 1));
    }
  }
  m.heads.calibrate_dense(concat_rows(xs), concat_rows(ys), 1e-3);
  // fewer camera rows than readout dims, so lean harder on the ridge
  m.heads.calibrate_camera(concat_rows(xcam), concat_rows(ycam), 0.1);
  return m;
}

ParamMap FrozenModel::frozen_params() const {
  ParamMap out;
  enc.to_params(out, "encoder");
  bb.to_params(out, "backbone");
  heads.to_params(out, "heads");
  return out;
}

UnprunedRun run_unpruned(const FrozenModel& model, const ClipSample& clip, double alpha) {
  UnprunedRun run;
  run.grids = encode_frames(clip, model.cfg, model.enc);
  SequenceBatch seq = make_full_sequence(run.grids, model.cfg);
  EagerEngine eng;
  AttentionTrace trace;
  Tensor out = backbone_forward(eng, seq.tokens, seq.layout, model.bb, model.cfg, &trace, &run.flops);
  run.target = saliency_target(trace, alpha);
  run.full_patch_out.reserve(static_cast<size_t>(model.cfg.frames));
  std::vector<int> cam_rows;
  for (int f = 0; f < model.cfg.frames; ++f) {
    run.full_patch_out.push_back(gather_rows(out, seq.layout.patch_rows(f)));
    cam_rows.push_back(seq.layout.camera_row(f));
  }
  run.camera_out = gather_rows(out, cam_rows);
  return run;
}

TokenLayout kept_layout(int frames, int registers, const std::vector<std::vector<int>>& kept) {
  if (static_cast<int>(kept.size()) != frames) throw std::runtime_error("kept_layout: per-frame list count mismatch");
  TokenLayout layout;
  layout.frames = frames;
  int row = 0;
  for (int f = 0; f < frames; ++f) {
    const auto& ids = kept[static_cast<size_t>(f)];
    layout.span.emplace_back(row, row + static_cast<int>(ids.size()) + 1 + registers);
    for (int idx : ids) {
      layout.role.push_back(TokenRole::Patch);
      layout.frame.push_back(f);
      layout.patch_index.push_back(idx);
    }
    layout.role.push_back(TokenRole::Camera);
    layout.frame.push_back(f);
    layout.patch_index.push_back(-1);
    for (int r = 0; r < registers; ++r) {
      layout.role.push_back(TokenRole::Register);
      layout.frame.push_back(f);
      layout.patch_index.push_back(-1);
    }
    row += static_cast<int>(ids.size()) + 1 + registers;
  }
  return layout;
}

PrunedForward build_pruned_forward(Graph& g, const FrozenModel& model, const UnprunedRun& run, const ClipSample& clip,
                                   ScorerParams& scorer, RestorationParams& restore, const PipelineSettings& s,
                                   const LossWeights& w, bool training) {
  const BackboneConfig& cfg = model.cfg;
  const int frames = cfg.frames;
  const int patches = cfg.patches();

  PrunedForward fwd;
  auto scorer_nodes = register_params(g, scorer.trainable());

  std::vector<NodeId> feat(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    feat[static_cast<size_t>(f)] = g.constant(run.grids[static_cast<size_t>(f)].patches);
    fwd.scores.push_back(
        scorer_forward(g, feat[static_cast<size_t>(f)], scorer_nodes, scorer, cfg.grid_h, cfg.grid_w, training));
  }

  // Selection is data, not graph: materialize the scores and build the plan.
  SaliencyMap predicted;
  predicted.kind = SaliencyKind::Predicted;
  predicted.scores = Tensor::zeros({frames, patches});
  for (int f = 0; f < frames; ++f) {
    const Tensor& col = g.value(fwd.scores[static_cast<size_t>(f)]);
    for (int p = 0; p < patches; ++p) predicted.scores.at(f, p) = col.at(p, 0);
  }
  fwd.plan = route(run.grids, predicted, s.keep_ratio, s.merge_fraction, s.mode);

  // Reduced sequence: merged survivors + the frame's camera/register tokens.
  std::vector<NodeId> merged(static_cast<size_t>(frames));
  std::vector<NodeId> parts;
  std::vector<std::vector<int>> kept(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    const FrameRoute& fr = fwd.plan.frames[static_cast<size_t>(f)];
    kept[static_cast<size_t>(f)] = fr.keep;
    merged[static_cast<size_t>(f)] = g.merge_rows(feat[static_cast<size_t>(f)], fwd.scores[static_cast<size_t>(f)],
                                                  merge_spec(fr));
    parts.push_back(merged[static_cast<size_t>(f)]);
    parts.push_back(g.constant(run.grids[static_cast<size_t>(f)].camera));
    parts.push_back(g.constant(run.grids[static_cast<size_t>(f)].registers));
  }
  fwd.reduced = kept_layout(frames, cfg.registers, kept);
  NodeId tokens = g.concat_rows(parts);

  GraphEngine eng{&g};
  fwd.backbone_out = backbone_forward(eng, tokens, fwd.reduced, model.bb, cfg);

  HeadNodes heads = head_constants(g, model.heads);
  std::vector<int> cam_rows;
  for (int f = 0; f < frames; ++f) cam_rows.push_back(fwd.reduced.camera_row(f));
  fwd.camera_pred = g.linear(g.gather_rows(fwd.backbone_out, cam_rows), heads.w_cam, heads.b_cam);

  RestoreNodes rn;
  const bool full_keep = static_cast<int>(kept[0].size()) == patches;
  if (s.variant == RestoreVariant::CrossAttention && !full_keep) {
    rn = register_restore_params(g, restore);
  }

  NodeId restore_sum;
  NodeId depth_sum;
  NodeId point_sum;
  for (int f = 0; f < frames; ++f) {
    const FrameRoute& fr = fwd.plan.frames[static_cast<size_t>(f)];
    NodeId survivors = g.gather_rows(fwd.backbone_out, fwd.reduced.patch_rows(f));
    NodeId restored;
    if (full_keep) {
      restored = survivors;  // nothing was dropped; restoration is a no-op
    } else {
      switch (s.variant) {
        case RestoreVariant::CrossAttention:
          restored = restore_frame(g, feat[static_cast<size_t>(f)], merged[static_cast<size_t>(f)], survivors, rn,
                                   restore.attn_dim, restore.heads);
          break;
        case RestoreVariant::ZeroFill:
          restored = g.matmul(g.constant(zero_fill_matrix(fr.keep, patches)), survivors);
          break;
        case RestoreVariant::Bilinear:
          restored = g.matmul(g.constant(bilinear_matrix(fr.keep, cfg.grid_h, cfg.grid_w)), survivors);
          break;
      }
    }
    fwd.restored.push_back(restored);

    NodeId frame_mse = mse_loss(g, restored, g.constant(run.full_patch_out[static_cast<size_t>(f)]));
    restore_sum = f == 0 ? frame_mse : g.add(restore_sum, frame_mse);

    NodeId dense = g.linear(restored, heads.w_dense, heads.b_dense);
    DenseOutputs split = split_dense(g, dense);
    NodeId dloss = dense_map_loss(g, split.depth, g.constant(clip.depth[static_cast<size_t>(f)]), split.log_sigma_d,
                                  cfg.grid_h, cfg.grid_w, w.sigma_reg);
    NodeId ploss = dense_map_loss(g, split.point, g.constant(clip.pointmap[static_cast<size_t>(f)]), split.log_sigma_p,
                                  cfg.grid_h, cfg.grid_w, w.sigma_reg);
    depth_sum = f == 0 ? dloss : g.add(depth_sum, dloss);
    point_sum = f == 0 ? ploss : g.add(point_sum, ploss);
  }

  fwd.restore_loss = g.scale(restore_sum, 1.0 / static_cast<double>(frames));
  fwd.depth = depth_sum;
  fwd.point = point_sum;
  fwd.camera = camera_loss(g, fwd.camera_pred, g.constant(clip.cameras), w.huber_delta);
  fwd.distill = distill_loss(g, fwd.scores, run.target);
  return fwd;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::runtime_error("spearman: length mismatch");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n, 0.0);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;  // tie-averaged 1-based rank
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

EvalMetrics evaluate_clip(const FrozenModel& model, const ClipSample& clip, ScorerParams& scorer,
                          RestorationParams& restore, const PipelineSettings& s, const LossWeights& w) {
  UnprunedRun run = run_unpruned(model, clip, s.alpha);
  Graph g;
  PrunedForward fwd = build_pruned_forward(g, model, run, clip, scorer, restore, s, w, /*training=*/false);

  const BackboneConfig& cfg = model.cfg;
  const int frames = cfg.frames;
  const int patches = cfg.patches();

  EvalMetrics m;
  double mse = 0, dmae = 0, pmae = 0;
  for (int f = 0; f < frames; ++f) {
    const Tensor& restored = g.value(fwd.restored[static_cast<size_t>(f)]);
    const Tensor& full = run.full_patch_out[static_cast<size_t>(f)];
    double acc = 0;
    for (int i = 0; i < restored.numel(); ++i) {
      const double d = restored.data()[i] - full.data()[i];
      acc += d * d;
    }
    mse += acc / static_cast<double>(restored.numel());

    Tensor dense = add_rowvec(matmul(restored, model.heads.w_dense), model.heads.b_dense);
    const Tensor& dgt = clip.depth[static_cast<size_t>(f)];
    const Tensor& pgt = clip.pointmap[static_cast<size_t>(f)];
    for (int p = 0; p < patches; ++p) {
      dmae += std::fabs(dense.at(p, 0) - dgt.at(p, 0));
      for (int c = 0; c < 3; ++c) pmae += std::fabs(dense.at(p, 1 + c) - pgt.at(p, c));
    }
  }
  m.restore_mse = mse / static_cast<double>(frames);
  m.depth_mae = dmae / static_cast<double>(frames * patches);
  m.point_mae = pmae / static_cast<double>(frames * patches * 3);

  const Tensor& cam_pred = g.value(fwd.camera_pred);
  double cmae = 0;
  for (int i = 0; i < cam_pred.numel(); ++i) cmae += std::fabs(cam_pred.data()[i] - clip.cameras.data()[i]);
  m.camera_mae = cmae / static_cast<double>(cam_pred.numel());

  double rho = 0;
  for (int f = 0; f < frames; ++f) {
    std::vector<double> pred(static_cast<size_t>(patches)), targ(static_cast<size_t>(patches));
    const Tensor& col = g.value(fwd.scores[static_cast<size_t>(f)]);
    for (int p = 0; p < patches; ++p) {
      pred[static_cast<size_t>(p)] = col.at(p, 0);
      targ[static_cast<size_t>(p)] = run.target.at(f, p);
    }
    rho += spearman(pred, targ);
  }
  m.spearman = rho / static_cast<double>(frames);
  m.distill_bce = g.value(fwd.distill)[0];
  m.objective = w.distill * m.distill_bce + w.restore * g.value(fwd.restore_loss)[0] +
                w.task * (g.value(fwd.camera)[0] + g.value(fwd.depth)[0] + g.value(fwd.point)[0]);
  return m;
}

namespace {

std::map<std::string, Tensor*> scorer_refs(ScorerParams& p) {
  return {
      {"scorer.w_in", &p.w_in},         {"scorer.b_in", &p.b_in},   {"scorer.w_dw", &p.w_dw},
      {"scorer.b_dw", &p.b_dw},         {"scorer.w_out", &p.w_out}, {"scorer.b_out", &p.b_out},
      {"scorer.bn1.gamma", &p.bn1.gamma}, {"scorer.bn1.beta", &p.bn1.beta},
      {"scorer.bn2.gamma", &p.bn2.gamma}, {"scorer.bn2.beta", &p.bn2.beta},
  };
}

std::map<std::string, Tensor*> restore_refs(RestorationParams& p) {
  return {
      {"restore.wq", &p.wq}, {"restore.bq", &p.bq}, {"restore.wk", &p.wk}, {"restore.bk", &p.bk},
      {"restore.wv", &p.wv}, {"restore.bv", &p.bv}, {"restore.wo", &p.wo}, {"restore.bo", &p.bo},
  };
}

ParamMap pick_grads(const ParamMap& all, const std::map<std::string, Tensor*>& wanted) {
  ParamMap out;
  for (const auto& [name, ptr] : wanted) {
    (void)ptr;
    auto it = all.find(name);
    if (it == all.end()) throw std::runtime_error("training: no gradient recorded for " + name);
    out[name] = it->second;
  }
  return out;
}

}  // namespace

TrainResult train(const FrozenModel& model, const std::vector<ClipSample>& clips, const TrainOptions& opt,
                  uint64_t seed, const ScorerParams* warm_start) {
  if (clips.empty()) throw std::runtime_error("training: need at least one clip");
  Rng root(seed);
  const uint64_t scorer_seed = root.next_u64();
  const uint64_t restore_seed = root.next_u64();

  TrainResult result;
  result.scorer =
      warm_start ? *warm_start : ScorerParams::init(model.cfg.input_dim, opt.scorer_hidden, scorer_seed);
  Rng restore_rng(restore_seed);
  result.restore.init(model.cfg.input_dim, model.cfg.model_dim, opt.restore_dim, opt.restore_heads, restore_rng);

  std::vector<UnprunedRun> cache;
  cache.reserve(clips.size());
  for (const ClipSample& clip : clips) cache.push_back(run_unpruned(model, clip, opt.pipe.alpha));

  int global_step = 0;

  const bool run_stage1 = opt.schedule == Schedule::Stage1Only || opt.schedule == Schedule::TwoStage;
  if (run_stage1) {
    AdamOptimizer adam(opt.lr);
    auto refs = scorer_refs(result.scorer);
    for (int step = 0; step < opt.stage1_steps; ++step) {
      const size_t ci = static_cast<size_t>(step) % clips.size();
      Graph g;
      auto nodes = register_params(g, result.scorer.trainable());
      std::vector<NodeId> scores;
      for (int f = 0; f < model.cfg.frames; ++f) {
        NodeId feat = g.constant(cache[ci].grids[static_cast<size_t>(f)].patches);
        scores.push_back(scorer_forward(g, feat, nodes, result.scorer, model.cfg.grid_h, model.cfg.grid_w, true));
      }
      NodeId loss = distill_loss(g, scores, cache[ci].target);
      g.backward(loss);
      adam.step(refs, pick_grads(g.parameter_grads(), refs));

      TrainLogRow row;
      row.step = global_step++;
      row.stage = 1;
      row.distill = g.value(loss)[0];
      row.total = row.distill;
      result.log.push_back(row);
    }
  }

  const bool run_stage2 = opt.schedule != Schedule::Stage1Only;
  if (run_stage2) {
    LossWeights w = opt.weights;
    if (opt.schedule == Schedule::Stage2Only) w.distill = 0.0;
    const bool learned_restore = opt.pipe.variant == RestoreVariant::CrossAttention;
    AdamOptimizer adam(opt.lr);
    auto refs = scorer_refs(result.scorer);
    if (learned_restore) {
      for (auto& [name, ptr] : restore_refs(result.restore)) refs[name] = ptr;
    }
    for (int step = 0; step < opt.stage2_steps; ++step) {
      const size_t ci = static_cast<size_t>(step) % clips.size();
      Graph g;
      PrunedForward fwd =
          build_pruned_forward(g, model, cache[ci], clips[ci], result.scorer, result.restore, opt.pipe, w, true);
      NodeId task = g.add(fwd.camera, g.add(fwd.depth, fwd.point));
      NodeId total = g.add(g.scale(fwd.restore_loss, w.restore), g.scale(task, w.task));
      if (w.distill != 0.0) total = g.add(total, g.scale(fwd.distill, w.distill));
      g.backward(total);

      // The learned-restoration parameters only join the tape when tokens
      // were actually dropped; fall back to scorer-only updates otherwise.
      auto grads = g.parameter_grads();
      std::map<std::string, Tensor*> present;
      for (auto& [name, ptr] : refs) {
        if (grads.count(name)) present[name] = ptr;
      }
      adam.step(present, pick_grads(grads, present));

      TrainLogRow row;
      row.step = global_step++;
      row.stage = 2;
      row.distill = g.value(fwd.distill)[0];
      row.restore = g.value(fwd.restore_loss)[0];
      row.camera = g.value(fwd.camera)[0];
      row.depth = g.value(fwd.depth)[0];
      row.point = g.value(fwd.point)[0];
      row.total = g.value(total)[0];
      result.log.push_back(row);
    }
  }

  return result;
}

}  // namespace precut

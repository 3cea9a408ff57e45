#include "precut/harness.hpp"

#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "precut/csv.hpp"

namespace precut {

namespace fs = std::filesystem;

std::vector<ClipSample> make_clips(const ExperimentConfig& cfg, const std::string& stream, int count) {
  std::vector<ClipSample> clips;
  clips.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) clips.push_back(generate_clip(cfg.scene(), cfg.clip_seed(stream, i)));
  return clips;
}

void save_training_checkpoint(const std::string& path, const ExperimentConfig& cfg, const std::string& stage,
                              const ScorerParams& scorer, const RestorationParams& restore) {
  ParamMap params = scorer.state();
  for (const auto& [name, tensor] : restore.state()) params[name] = tensor;
  std::map<std::string, std::string> meta;
  meta["config_fingerprint"] = cfg.fingerprint_hex();
  meta["schedule"] = cfg.schedule;
  meta["stage"] = stage;
  save_checkpoint(path, params, meta);
}

void load_training_checkpoint(const std::string& path, const ExperimentConfig& cfg, ScorerParams& scorer,
                              RestorationParams& restore, std::string* stage) {
  std::map<std::string, std::string> meta;
  ParamMap params = load_checkpoint(path, &meta);
  const auto it = meta.find("config_fingerprint");
  if (it == meta.end()) throw std::runtime_error("checkpoint: missing config fingerprint");
  if (it->second != cfg.fingerprint_hex()) {
    throw std::runtime_error("checkpoint: was produced by a different configuration (fingerprint " + it->second +
                             ", expected " + cfg.fingerprint_hex() + ")");
  }
  ParamMap scorer_params, restore_params;
  for (const auto& [name, tensor] : params) {
    if (name.rfind("scorer.", 0) == 0) scorer_params[name] = tensor;
    if (name.rfind("restore.", 0) == 0) restore_params[name] = tensor;
  }
  scorer.load_state(scorer_params);
  restore.load_state(restore_params);
  if (stage) *stage = meta.count("stage") ? meta.at("stage") : "";
}

void cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  cfg.save((fs::path(out_dir) / "config.json").string());
  for (int i = 0; i < cfg.train_clips; ++i) {
    ClipSample clip = generate_clip(cfg.scene(), cfg.clip_seed("train", i));
    save_clip((fs::path(out_dir) / ("train_" + std::to_string(i))).string(), clip);
  }
  for (int i = 0; i < cfg.eval_clips; ++i) {
    ClipSample clip = generate_clip(cfg.scene(), cfg.clip_seed("eval", i));
    save_clip((fs::path(out_dir) / ("eval_" + std::to_string(i))).string(), clip);
  }
  std::cout << "wrote " << cfg.train_clips << " train + " << cfg.eval_clips << " eval clips to " << out_dir << "\n";
}

namespace {

void write_loss_curve(const std::string& path, const ExperimentConfig& cfg, const std::vector<TrainLogRow>& log) {
  CsvWriter csv(path, {"step", "stage", "total", "distill", "restore", "camera", "depth", "point", "config"});
  for (const TrainLogRow& r : log) {
    csv.row({CsvWriter::num(r.step), CsvWriter::num(r.stage), CsvWriter::num(r.total), CsvWriter::num(r.distill),
             CsvWriter::num(r.restore), CsvWriter::num(r.camera), CsvWriter::num(r.depth), CsvWriter::num(r.point),
             cfg.fingerprint_hex()});
  }
}

}  // namespace

void cmd_train(const ExperimentConfig& orig_cfg, const std::string& out_dir, const std::string& stage_arg) {
  if (stage_arg != "" && stage_arg != "1" && stage_arg != "2" && stage_arg != "joint") {
    throw std::runtime_error("train: stage must be one of 1, 2, joint");
  }
  ExperimentConfig cfg = orig_cfg;
  if (stage_arg == "joint") cfg.schedule = "joint";  // force the single-stage variant
  const int stage = stage_arg == "1" ? 1 : stage_arg == "2" ? 2 : 0;
  fs::create_directories(out_dir);
  cfg.save((fs::path(out_dir) / "config.json").string());

  FrozenModel model = FrozenModel::init(cfg.backbone(), cfg.channels, cfg.seed);
  std::vector<ClipSample> clips = make_clips(cfg, "train", cfg.train_clips);
  TrainOptions opt = cfg.train_options();
  const Schedule sched = schedule_from_name(cfg.schedule);

  if (stage == 1) {
    if (sched == Schedule::Stage2Only || sched == Schedule::Joint) {
      throw std::runtime_error("train: schedule '" + cfg.schedule + "' has no separate first stage");
    }
    opt.schedule = Schedule::Stage1Only;
    TrainResult result = train(model, clips, opt, cfg.seed);
    save_training_checkpoint((fs::path(out_dir) / "checkpoint_stage1.json").string(), cfg, "1", result.scorer,
                             result.restore);
    write_loss_curve((fs::path(out_dir) / "loss_curve_stage1.csv").string(), cfg, result.log);
    std::cout << "stage 1 done: " << result.log.size() << " steps, final distill loss "
              << (result.log.empty() ? 0.0 : result.log.back().distill) << "\n";
    return;
  }

  if (stage == 2) {
    if (sched == Schedule::Stage1Only) throw std::runtime_error("train: schedule 'stage1-only' has no second stage");
    if (sched == Schedule::TwoStage) {
      const std::string s1 = (fs::path(out_dir) / "checkpoint_stage1.json").string();
      if (!fs::exists(s1)) {
        throw std::runtime_error("train: two-stage --stage 2 needs the stage-1 checkpoint at " + s1 +
                                 " (run --stage 1 first)");
      }
      ScorerParams warm = ScorerParams::init(cfg.input_dim, cfg.scorer_hidden, 0);
      RestorationParams unused;
      Rng tmp(0);
      unused.init(cfg.input_dim, cfg.model_dim, cfg.restore_dim, cfg.restore_heads, tmp);
      load_training_checkpoint(s1, cfg, warm, unused);
      opt.stage1_steps = 0;  // continue into stage 2 from the loaded scorer
      TrainResult result = train(model, clips, opt, cfg.seed, &warm);
      save_training_checkpoint((fs::path(out_dir) / "checkpoint.json").string(), cfg, "final", result.scorer,
                               result.restore);
      write_loss_curve((fs::path(out_dir) / "loss_curve.csv").string(), cfg, result.log);
      std::cout << "stage 2 done: " << result.log.size() << " steps\n";
      return;
    }
    // stage2-only / joint run entirely in "stage 2"; fall through to a full run.
  }

  TrainResult result = train(model, clips, opt, cfg.seed);
  save_training_checkpoint((fs::path(out_dir) / "checkpoint.json").string(), cfg, "final", result.scorer,
                           result.restore);
  write_loss_curve((fs::path(out_dir) / "loss_curve.csv").string(), cfg, result.log);
  std::cout << "training done (" << cfg.schedule << "): " << result.log.size() << " steps, final total "
            << (result.log.empty() ? 0.0 : result.log.back().total) << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path, const std::string& out_dir) {
  fs::create_directories(out_dir);
  FrozenModel model = FrozenModel::init(cfg.backbone(), cfg.channels, cfg.seed);
  ScorerParams scorer = ScorerParams::init(cfg.input_dim, cfg.scorer_hidden, 0);
  RestorationParams restore;
  Rng tmp(0);
  restore.init(cfg.input_dim, cfg.model_dim, cfg.restore_dim, cfg.restore_heads, tmp);
  load_training_checkpoint(checkpoint_path, cfg, scorer, restore);

  const PipelineSettings s = cfg.settings();
  const LossWeights w = cfg.loss_weights();

  CsvWriter metrics((fs::path(out_dir) / "metrics.csv").string(),
                    {"clip", "restore_mse", "depth_mae", "point_mae", "camera_mae", "spearman", "distill_bce",
                     "objective", "config"});
  CsvWriter scores((fs::path(out_dir) / "scores.csv").string(),
                   {"clip", "frame", "token", "target", "predicted", "config"});

  EvalMetrics mean;
  for (int i = 0; i < cfg.eval_clips; ++i) {
    ClipSample clip = generate_clip(cfg.scene(), cfg.clip_seed("eval", i));
    EvalMetrics m = evaluate_clip(model, clip, scorer, restore, s, w);
    metrics.row({CsvWriter::num(i), CsvWriter::num(m.restore_mse), CsvWriter::num(m.depth_mae),
                 CsvWriter::num(m.point_mae), CsvWriter::num(m.camera_mae), CsvWriter::num(m.spearman),
                 CsvWriter::num(m.distill_bce), CsvWriter::num(m.objective), cfg.fingerprint_hex()});
    mean.restore_mse += m.restore_mse;
    mean.depth_mae += m.depth_mae;
    mean.point_mae += m.point_mae;
    mean.camera_mae += m.camera_mae;
    mean.spearman += m.spearman;
    mean.distill_bce += m.distill_bce;
    mean.objective += m.objective;

    UnprunedRun run = run_unpruned(model, clip, s.alpha);
    SaliencyMap predicted = score_frames(run.grids, scorer, model.cfg, false);
    for (int f = 0; f < cfg.frames; ++f) {
      for (int p = 0; p < model.cfg.patches(); ++p) {
        scores.row({CsvWriter::num(i), CsvWriter::num(f), CsvWriter::num(p), CsvWriter::num(run.target.at(f, p)),
                    CsvWriter::num(predicted.at(f, p)), cfg.fingerprint_hex()});
      }
    }
  }
  const double n = static_cast<double>(cfg.eval_clips);
  metrics.row({"mean", CsvWriter::num(mean.restore_mse / n), CsvWriter::num(mean.depth_mae / n),
               CsvWriter::num(mean.point_mae / n), CsvWriter::num(mean.camera_mae / n),
               CsvWriter::num(mean.spearman / n), CsvWriter::num(mean.distill_bce / n),
               CsvWriter::num(mean.objective / n), cfg.fingerprint_hex()});
  std::cout << "eval done: mean spearman " << mean.spearman / n << ", mean restore mse " << mean.restore_mse / n
            << "\n";
}

std::vector<std::string> sweep_grid(const std::string& axis) {
  if (axis == "keep_ratio") return {"0.05", "0.1", "0.2", "0.4", "0.5"};
  if (axis == "alpha") return {"0.0", "0.25", "0.5", "0.75", "1.0"};
  if (axis == "mode") return {"three-way", "pure-prune", "full-merge", "uniform-alloc"};
  if (axis == "restoration") return {"cross-attention", "zero-fill", "bilinear"};
  if (axis == "schedule") return {"stage1-only", "stage2-only", "joint", "two-stage"};
  throw std::runtime_error("sweep: unknown axis '" + axis + "'");
}

void cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, std::vector<std::string> values,
               const std::string& out_dir) {
  if (values.empty()) values = sweep_grid(axis);
  fs::create_directories(out_dir);

  CsvWriter csv((fs::path(out_dir) / "sweep.csv").string(),
                {"axis", "value", "restore_mse", "depth_mae", "point_mae", "camera_mae", "spearman", "distill_bce",
                 "objective", "final_train_total", "config"});

  for (const std::string& value : values) {
    ExperimentConfig c = cfg;
    if (axis == "keep_ratio") c.keep_ratio = std::stod(value);
    else if (axis == "alpha") c.alpha = std::stod(value);
    else if (axis == "mode") c.mode = value;
    else if (axis == "restoration") c.restoration = value;
    else if (axis == "schedule") c.schedule = value;
    else throw std::runtime_error("sweep: unknown axis '" + axis + "'");

    FrozenModel model = FrozenModel::init(c.backbone(), c.channels, c.seed);
    std::vector<ClipSample> clips = make_clips(c, "train", c.train_clips);
    TrainResult result = train(model, clips, c.train_options(), c.seed);

    EvalMetrics mean;
    const PipelineSettings s = c.settings();
    const LossWeights w = c.loss_weights();
    for (int i = 0; i < c.eval_clips; ++i) {
      ClipSample clip = generate_clip(c.scene(), c.clip_seed("eval", i));
      EvalMetrics m = evaluate_clip(model, clip, result.scorer, result.restore, s, w);
      mean.restore_mse += m.restore_mse;
      mean.depth_mae += m.depth_mae;
      mean.point_mae += m.point_mae;
      mean.camera_mae += m.camera_mae;
      mean.spearman += m.spearman;
      mean.distill_bce += m.distill_bce;
      mean.objective += m.objective;
    }
    const double n = static_cast<double>(c.eval_clips);
    csv.row({axis, value, CsvWriter::num(mean.restore_mse / n), CsvWriter::num(mean.depth_mae / n),
             CsvWriter::num(mean.point_mae / n), CsvWriter::num(mean.camera_mae / n),
             CsvWriter::num(mean.spearman / n), CsvWriter::num(mean.distill_bce / n),
             CsvWriter::num(mean.objective / n),
             CsvWriter::num(result.log.empty() ? 0.0 : result.log.back().total), c.fingerprint_hex()});
    std::cout << "sweep " << axis << "=" << value << " done\n";
  }
}

void cmd_bench(const ExperimentConfig& cfg, const std::string& out_dir, std::vector<int> frame_counts, int warmups,
               int reps) {
  if (frame_counts.empty()) frame_counts.push_back(cfg.frames);
  fs::create_directories(out_dir);

  CsvWriter csv((fs::path(out_dir) / "bench.csv").string(),
                {"frames", "patches", "keep_ratio", "mode", "cut_after_layer", "rows_full", "rows_reduced", "wall_ms",
                 "flops_total", "flops_projections", "flops_frame_pairs", "flops_global_pairs",
                 "flops_global_patch_pairs", "config"});
  for (int frames : frame_counts) {
    if (frames < 1) throw std::runtime_error("bench: frame counts must be positive");
    ExperimentConfig c = cfg;
    c.frames = frames;
    // Timing and FLOP counts never touch the readout heads; skip their
    // calibration passes, which would dominate setup at large frame counts.
    FrozenModel model = FrozenModel::init(c.backbone(), c.channels, c.seed, /*calibrate_heads=*/false);
    ClipSample clip = generate_clip(c.scene(), c.clip_seed("bench", 0));
    ScorerParams scorer = ScorerParams::init(c.input_dim, c.scorer_hidden, c.seed ^ 0xBE5Cull);
    RestorationParams restore;
    Rng rng(c.seed ^ 0xBE5C2ull);
    restore.init(c.input_dim, c.model_dim, c.restore_dim, c.restore_heads, rng);

    const PipelineSettings s = c.settings();
    for (BenchMode mode : {BenchMode::Full, BenchMode::PreReduce, BenchMode::MidReduce}) {
      BenchRecord r = bench_pipeline(model, clip, scorer, restore, s, mode, warmups, reps);
      csv.row({CsvWriter::num(r.frames), CsvWriter::num(r.patches), CsvWriter::num(r.keep_ratio), r.mode,
               CsvWriter::num(r.cut_after_layer), CsvWriter::num(r.rows_full), CsvWriter::num(r.rows_reduced),
               CsvWriter::num(r.wall_ms), CsvWriter::num(r.flops.total), CsvWriter::num(r.flops.projections),
               CsvWriter::num(r.flops.frame_attn_pairs), CsvWriter::num(r.flops.global_attn_pairs),
               CsvWriter::num(r.flops.global_attn_patch_pairs), c.fingerprint_hex()});
      std::cout << "N=" << r.frames << " " << r.mode << ": " << r.wall_ms << " ms, " << r.flops.total / 1e6
                << " MFLOP, rows " << r.rows_full << " -> " << r.rows_reduced << "\n";
    }
  }
}

}  // namespace precut

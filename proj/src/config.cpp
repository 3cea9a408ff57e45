#include "precut/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace precut {

BackboneConfig ExperimentConfig::backbone() const {
  BackboneConfig cfg;
  cfg.frames = frames;
  cfg.grid_h = grid_h;
  cfg.grid_w = grid_w;
  cfg.input_dim = input_dim;
  cfg.model_dim = model_dim;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.registers = registers;
  cfg.qk_gain = qk_gain;
  return cfg;
}

SceneConfig ExperimentConfig::scene() const { return SceneConfig{frames, grid_h, grid_w, channels, 1, 3}; }

PipelineSettings ExperimentConfig::settings() const {
  PipelineSettings s;
  s.keep_ratio = keep_ratio;
  s.merge_fraction = merge_fraction;
  s.alpha = alpha;
  s.mode = routing_mode_from_name(mode);
  s.variant = restore_variant_from_name(restoration);
  return s;
}

LossWeights ExperimentConfig::loss_weights() const {
  LossWeights w;
  w.distill = loss_distill;
  w.restore = loss_restore;
  w.task = loss_task;
  w.sigma_reg = sigma_reg;
  w.huber_delta = huber_delta;
  return w;
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions opt;
  opt.schedule = schedule_from_name(schedule);
  opt.stage1_steps = stage1_steps;
  opt.stage2_steps = stage2_steps;
  opt.lr = lr;
  opt.scorer_hidden = scorer_hidden;
  opt.restore_dim = restore_dim;
  opt.restore_heads = restore_heads;
  opt.weights = loss_weights();
  opt.pipe = settings();
  return opt;
}

namespace {

nlohmann::json to_json_obj(const ExperimentConfig& c) {
  nlohmann::json j;
  j["frames"] = c.frames;
  j["grid_h"] = c.grid_h;
  j["grid_w"] = c.grid_w;
  j["channels"] = c.channels;
  j["input_dim"] = c.input_dim;
  j["model_dim"] = c.model_dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["registers"] = c.registers;
  j["qk_gain"] = c.qk_gain;
  j["scorer_hidden"] = c.scorer_hidden;
  j["alpha"] = c.alpha;
  j["keep_ratio"] = c.keep_ratio;
  j["merge_fraction"] = c.merge_fraction;
  j["mode"] = c.mode;
  j["restoration"] = c.restoration;
  j["restore_dim"] = c.restore_dim;
  j["restore_heads"] = c.restore_heads;
  j["schedule"] = c.schedule;
  j["stage1_steps"] = c.stage1_steps;
  j["stage2_steps"] = c.stage2_steps;
  j["lr"] = c.lr;
  j["loss_distill"] = c.loss_distill;
  j["loss_restore"] = c.loss_restore;
  j["loss_task"] = c.loss_task;
  j["sigma_reg"] = c.sigma_reg;
  j["huber_delta"] = c.huber_delta;
  j["train_clips"] = c.train_clips;
  j["eval_clips"] = c.eval_clips;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

std::string ExperimentConfig::to_json() const { return to_json_obj(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("frames", c.frames);
  get("grid_h", c.grid_h);
  get("grid_w", c.grid_w);
  get("channels", c.channels);
  get("input_dim", c.input_dim);
  get("model_dim", c.model_dim);
  get("layers", c.layers);
  get("heads", c.heads);
  get("registers", c.registers);
  get("qk_gain", c.qk_gain);
  get("scorer_hidden", c.scorer_hidden);
  get("alpha", c.alpha);
  get("keep_ratio", c.keep_ratio);
  get("merge_fraction", c.merge_fraction);
  get("mode", c.mode);
  get("restoration", c.restoration);
  get("restore_dim", c.restore_dim);
  get("restore_heads", c.restore_heads);
  get("schedule", c.schedule);
  get("stage1_steps", c.stage1_steps);
  get("stage2_steps", c.stage2_steps);
  get("lr", c.lr);
  get("loss_distill", c.loss_distill);
  get("loss_restore", c.loss_restore);
  get("loss_task", c.loss_task);
  get("sigma_reg", c.sigma_reg);
  get("huber_delta", c.huber_delta);
  get("train_clips", c.train_clips);
  get("eval_clips", c.eval_clips);
  get("seed", c.seed);
  // fail fast on values the pipeline cannot run with
  c.backbone().validate();
  routing_mode_from_name(c.mode);
  restore_variant_from_name(c.restoration);
  schedule_from_name(c.schedule);
  return c;
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << to_json() << "\n";
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

uint64_t ExperimentConfig::fingerprint() const {
  // FNV-1a 64 over the canonical dump (nlohmann sorts object keys).
  const std::string text = to_json_obj(*this).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::fingerprint_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint()));
  return std::string(buf);
}

uint64_t ExperimentConfig::clip_seed(const std::string& stream, int index) const {
  uint64_t tag = 0xcbf29ce484222325ULL;
  for (unsigned char ch : stream) {
    tag ^= ch;
    tag *= 0x100000001b3ULL;
  }
  Rng rng(seed ^ tag);
  return rng.fork(static_cast<uint64_t>(index)).next_u64();
}

}  // namespace precut

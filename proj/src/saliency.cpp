#include "precut/saliency.hpp"

#include <stdexcept>

namespace precut {

Tensor attention_mean(const AttentionTrace& trace) {
  if (trace.weights.empty()) throw std::runtime_error("saliency: empty trace");
  Tensor acc = trace.weights[0];
  for (size_t i = 1; i < trace.weights.size(); ++i) acc = add(acc, trace.weights[i]);
  return scale(acc, 1.0 / static_cast<double>(trace.weights.size()));
}

namespace {

void check_bounds(double v) {
  if (v < 0.0 || v > 1.0) throw std::runtime_error("saliency: attention value outside [0, 1]");
}

}  // namespace

std::vector<double> camera_anchoring(const AttentionTrace& trace, int f) {
  const TokenLayout& lay = trace.layout;
  const Tensor mean = attention_mean(trace);
  const int cam = lay.camera_row(f);
  std::vector<double> out;
  for (int row : lay.patch_rows(f)) {
    const double v = mean.at(cam, row);
    check_bounds(v);
    out.push_back(v);
  }
  return out;
}

std::vector<double> cross_view_matching(const AttentionTrace& trace) {
  const TokenLayout& lay = trace.layout;
  const Tensor mean = attention_mean(trace);
  std::vector<int> all_patch_rows;
  for (int i = 0; i < lay.size(); ++i)
    if (lay.role[i] == TokenRole::Patch) all_patch_rows.push_back(i);

  std::vector<double> out;
  out.reserve(all_patch_rows.size());
  for (int i : all_patch_rows) {
    double best = 0.0;
    for (int j : all_patch_rows) {
      if (j == i) continue;
      best = std::max(best, mean.at(i, j));
    }
    check_bounds(best);
    out.push_back(best);
  }
  return out;
}

void minmax_normalize_rows(Tensor& scores) {
  const int frames = scores.rows(), p = scores.cols();
  for (int f = 0; f < frames; ++f) {
    double lo = scores.at(f, 0), hi = scores.at(f, 0);
    for (int i = 1; i < p; ++i) {
      lo = std::min(lo, scores.at(f, i));
      hi = std::max(hi, scores.at(f, i));
    }
    if (hi == lo) {
      for (int i = 0; i < p; ++i) scores.at(f, i) = 0.5;
    } else {
      for (int i = 0; i < p; ++i) scores.at(f, i) = (scores.at(f, i) - lo) / (hi - lo);
    }
  }
}

SaliencyMap blend_target(const std::vector<double>& cam, const std::vector<double>& global, double alpha, int frames,
                         int patches) {
  if (alpha < 0.0 || alpha > 1.0) throw std::runtime_error("saliency: alpha outside [0, 1]");
  const size_t n = static_cast<size_t>(frames) * patches;
  if (cam.size() != n || global.size() != n) throw std::runtime_error("saliency: component length mismatch");
  Tensor cam_t({frames, patches}, cam);
  Tensor glob_t({frames, patches}, std::vector<double>(global));
  minmax_normalize_rows(cam_t);
  minmax_normalize_rows(glob_t);
  SaliencyMap map;
  map.kind = SaliencyKind::Target;
  map.scores = add(scale(cam_t, alpha), scale(glob_t, 1.0 - alpha));
  map.scores.ensure_finite("saliency blend");
  return map;
}

SaliencyMap saliency_target(const AttentionTrace& trace, double alpha) {
  const TokenLayout& lay = trace.layout;
  const int frames = lay.frames;
  if (frames < 1) throw std::runtime_error("saliency: empty layout");
  const int patches = static_cast<int>(lay.patch_rows(0).size());
  std::vector<double> cam;
  cam.reserve(static_cast<size_t>(frames) * patches);
  for (int f = 0; f < frames; ++f) {
    auto part = camera_anchoring(trace, f);
    if (static_cast<int>(part.size()) != patches) throw std::runtime_error("saliency: ragged frames");
    cam.insert(cam.end(), part.begin(), part.end());
  }
  return blend_target(cam, cross_view_matching(trace), alpha, frames, patches);
}

}  // namespace precut

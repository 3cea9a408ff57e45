#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "precut/tensor.hpp"

namespace precut {

// A synthetic multi-view clip: per-frame feature images plus dense ground
// truth (z-depth, world-space point map) and an 8-dim camera vector per frame
// (unit quaternion wxyz, camera center xyz, log focal).
struct ClipSample {
  int frames = 0;
  int h = 0, w = 0;
  int channels = 0;
  uint64_t seed = 0;
  std::vector<Tensor> images;    // per frame [h*w x C]
  std::vector<Tensor> depth;     // per frame [h*w x 1], strictly positive
  std::vector<Tensor> pointmap;  // per frame [h*w x 3]
  Tensor cameras;                // [frames x 8]
};

struct SceneConfig {
  int frames = 4;
  int h = 8;
  int w = 8;
  int channels = 8;
  int min_boxes = 1;
  int max_boxes = 3;
};

// Renders a clip by ray casting a closed box room with a few cuboid obstacles,
// textured with seeded 3-D value noise so overlapping views see consistent
// features. The camera slides smoothly between two random poses that always
// stay inside the room and outside every obstacle.
ClipSample generate_clip(const SceneConfig& cfg, uint64_t seed);

// Applies the clip's own pinhole model: lifts per-pixel depth through camera
// `frame` back to world space. Matches ClipSample::pointmap to ~1e-9.
Tensor unproject_depth(const ClipSample& clip, int frame);

// Directory round trip: flat little-endian f64 tensor files plus a JSON
// manifest that names each file with its shape.
void save_clip(const std::string& dir, const ClipSample& clip);
ClipSample load_clip(const std::string& dir);

}  // namespace precut

#include "doctest.h"
#include "precut/scene.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace precut;

namespace {

SceneConfig desk_cfg() {
  SceneConfig cfg;
  cfg.frames = 3;
  cfg.h = 6;
  cfg.w = 6;
  cfg.channels = 5;
  return cfg;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("same seed renders bit-identical clips, different seeds differ") {
  SceneConfig cfg = desk_cfg();
  ClipSample a = generate_clip(cfg, 123);
  ClipSample b = generate_clip(cfg, 123);
  REQUIRE(a.frames == b.frames);
  for (int f = 0; f < a.frames; ++f) {
    CHECK(bit_equal(a.images[f], b.images[f]));
    CHECK(bit_equal(a.depth[f], b.depth[f]));
    CHECK(bit_equal(a.pointmap[f], b.pointmap[f]));
  }
  CHECK(bit_equal(a.cameras, b.cameras));

  ClipSample c = generate_clip(cfg, 124);
  bool differs = false;
  for (int f = 0; f < a.frames && !differs; ++f) differs = !bit_equal(a.images[f], c.images[f]);
  CHECK(differs);
}

TEST_CASE("depths are strictly positive and cameras are unit quaternions") {
  ClipSample clip = generate_clip(desk_cfg(), 9001);
  for (int f = 0; f < clip.frames; ++f) {
    for (int64_t i = 0; i < clip.depth[f].numel(); ++i) CHECK(clip.depth[f][i] > 0.0);
    double norm = 0;
    for (int j = 0; j < 4; ++j) norm += clip.cameras.at(f, j) * clip.cameras.at(f, j);
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    CHECK(clip.cameras.at(f, 0) >= 0.0);  // canonical sign
  }
}

TEST_CASE("point map equals the unprojected depth") {
  for (uint64_t seed : {7ull, 77ull, 777ull}) {
    ClipSample clip = generate_clip(desk_cfg(), seed);
    for (int f = 0; f < clip.frames; ++f) {
      Tensor lifted = unproject_depth(clip, f);
      REQUIRE(lifted.same_shape(clip.pointmap[f]));
      for (int64_t i = 0; i < lifted.numel(); ++i) {
        CHECK(std::abs(lifted[i] - clip.pointmap[f][i]) < 1e-9);
      }
    }
  }
}

TEST_CASE("single-frame clips work and frames have texture variance") {
  SceneConfig cfg = desk_cfg();
  cfg.frames = 1;
  ClipSample clip = generate_clip(cfg, 5);
  CHECK(clip.frames == 1);
  CHECK(clip.cameras.rows() == 1);

  ClipSample multi = generate_clip(desk_cfg(), 31337);
  for (int f = 0; f < multi.frames; ++f) {
    const Tensor& img = multi.images[f];
    double mean = 0, var = 0;
    for (int64_t i = 0; i < img.numel(); ++i) mean += img[i];
    mean /= static_cast<double>(img.numel());
    for (int64_t i = 0; i < img.numel(); ++i) var += (img[i] - mean) * (img[i] - mean);
    var /= static_cast<double>(img.numel());
    CHECK(var > 1e-6);  // no all-constant frames
  }
}

TEST_CASE("clip directory round trip is bit-exact") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "precut_clip_rt";
  fs::remove_all(dir);
  ClipSample clip = generate_clip(desk_cfg(), 4242);
  save_clip(dir.string(), clip);
  ClipSample back = load_clip(dir.string());
  CHECK(back.frames == clip.frames);
  CHECK(back.h == clip.h);
  CHECK(back.w == clip.w);
  CHECK(back.channels == clip.channels);
  for (int f = 0; f < clip.frames; ++f) {
    CHECK(bit_equal(back.images[f], clip.images[f]));
    CHECK(bit_equal(back.depth[f], clip.depth[f]));
    CHECK(bit_equal(back.pointmap[f], clip.pointmap[f]));
  }
  CHECK(bit_equal(back.cameras, clip.cameras));
  fs::remove_all(dir);

  CHECK_THROWS(load_clip((fs::temp_directory_path() / "precut_clip_missing").string()));
}

TEST_CASE("invalid dimensions are rejected") {
  SceneConfig cfg = desk_cfg();
  cfg.frames = 0;
  CHECK_THROWS(generate_clip(cfg, 1));
  cfg = desk_cfg();
  cfg.h = 0;
  CHECK_THROWS(generate_clip(cfg, 1));
  cfg = desk_cfg();
  cfg.channels = 4;  // the feature stack needs its five noise octaves
  CHECK_THROWS(generate_clip(cfg, 1));
}

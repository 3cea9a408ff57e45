#include "precut/scene.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "precut/rng.hpp"

namespace precut {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double vdot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 vcross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double vnorm(const Vec3& a) { return std::sqrt(vdot(a, a)); }
Vec3 vnormed(const Vec3& a) {
  double n = vnorm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

struct Aabb {
  Vec3 lo, hi;
};

// Columns are the camera axes in world space; camera-to-world.
struct Rot {
  Vec3 x, y, z;
  Vec3 apply(const Vec3& v) const { return v[0] * x + v[1] * y + v[2] * z; }
};

std::array<double, 4> rot_to_quat(const Rot& r) {
  // Shepperd's method on the column matrix [x y z]
  const double m00 = r.x[0], m01 = r.y[0], m02 = r.z[0];
  const double m10 = r.x[1], m11 = r.y[1], m12 = r.z[1];
  const double m20 = r.x[2], m21 = r.y[2], m22 = r.z[2];
  double qw, qx, qy, qz;
  const double tr = m00 + m11 + m22;
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    qw = 0.25 * s;
    qx = (m21 - m12) / s;
    qy = (m02 - m20) / s;
    qz = (m10 - m01) / s;
  } else if (m00 > m11 && m00 > m22) {
    double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
    qw = (m21 - m12) / s;
    qx = 0.25 * s;
    qy = (m01 + m10) / s;
    qz = (m02 + m20) / s;
  } else if (m11 > m22) {
    double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
    qw = (m02 - m20) / s;
    qx = (m01 + m10) / s;
    qy = 0.25 * s;
    qz = (m12 + m21) / s;
  } else {
    double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
    qw = (m10 - m01) / s;
    qx = (m02 + m20) / s;
    qy = (m12 + m21) / s;
    qz = 0.25 * s;
  }
  double n = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
  qw /= n;
  qx /= n;
  qy /= n;
  qz /= n;
  if (qw < 0) {
    qw = -qw;
    qx = -qx;
    qy = -qy;
    qz = -qz;
  }
  return {qw, qx, qy, qz};
}

Rot quat_to_rot(const std::array<double, 4>& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Rot r;
  r.x = {1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)};
  r.y = {2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)};
  r.z = {2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)};
  return r;
}

Rot look_at(const Vec3& from, const Vec3& to) {
  Vec3 fwd = vnormed(to - from);
  Vec3 up = {0.0, 1.0, 0.0};
  Vec3 side = vcross(up, fwd);
  if (vnorm(side) < 1e-6) {
    up = {1.0, 0.0, 0.0};
    side = vcross(up, fwd);
  }
  Rot r;
  r.x = vnormed(side);
  r.z = fwd;
  r.y = vcross(fwd, r.x);
  return r;
}

// Deterministic lattice hash -> [0, 1)
double lattice(uint64_t seed, int64_t ix, int64_t iy, int64_t iz, uint64_t salt) {
  uint64_t h = seed;
  h ^= 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(ix) * 0xff51afd7ed558ccdULL;
  h ^= 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(iy) * 0xc4ceb9fe1a85ec53ULL;
  h ^= 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(iz) * 0x2545f4914f6cdd1dULL;
  h ^= salt * 0x94d049bb133111ebULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(uint64_t seed, const Vec3& p, uint64_t salt) {
  const auto fl = [](double v) { return std::floor(v); };
  const int64_t ix = static_cast<int64_t>(fl(p[0])), iy = static_cast<int64_t>(fl(p[1])),
                iz = static_cast<int64_t>(fl(p[2]));
  const double fx = smooth(p[0] - fl(p[0]));
  const double fy = smooth(p[1] - fl(p[1]));
  const double fz = smooth(p[2] - fl(p[2]));
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        double v = lattice(seed, ix + dx, iy + dy, iz + dz, salt);
        double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        acc += v * wgt;
      }
  return acc;
}

struct Hit {
  double t = 0.0;
  Vec3 normal{};
};

// Ray starts inside the closed room box; returns the nearest wall.
Hit hit_room(const Aabb& room, const Vec3& o, const Vec3& dir) {
  Hit best;
  best.t = 1e30;
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(dir[a]) < 1e-12) continue;
    const double bound = dir[a] > 0 ? room.hi[a] : room.lo[a];
    const double t = (bound - o[a]) / dir[a];
    if (t > 1e-9 && t < best.t) {
      best.t = t;
      best.normal = {0, 0, 0};
      best.normal[a] = dir[a] > 0 ? -1.0 : 1.0;
    }
  }
  return best;
}

bool hit_box(const Aabb& b, const Vec3& o, const Vec3& dir, Hit* out) {
  double tmin = -1e30, tmax = 1e30;
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(dir[a]) < 1e-12) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return false;
      continue;
    }
    double t0 = (b.lo[a] - o[a]) / dir[a];
    double t1 = (b.hi[a] - o[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis = a;
    }
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax || tmin <= 1e-9 || axis < 0) return false;
  out->t = tmin;
  out->normal = {0, 0, 0};
  out->normal[axis] = dir[axis] > 0 ? -1.0 : 1.0;
  return true;
}

}  // namespace

ClipSample generate_clip(const SceneConfig& cfg, uint64_t seed) {
  if (cfg.frames < 1 || cfg.h < 1 || cfg.w < 1 || cfg.channels < 5)
    throw std::runtime_error("scene: invalid config (needs >=1 frame and >=5 channels)");
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x85ebca6b);

  Aabb room;
  room.lo = {0, 0, 0};
  room.hi = {rng.uniform(3.0, 5.0), rng.uniform(2.8, 4.0), rng.uniform(3.0, 5.0)};

  // Obstacles sit low; the camera corridor is strictly above them.
  const int n_boxes = cfg.min_boxes + static_cast<int>(rng.below(static_cast<uint64_t>(cfg.max_boxes - cfg.min_boxes + 1)));
  std::vector<Aabb> boxes;
  for (int i = 0; i < n_boxes; ++i) {
    Vec3 size = {rng.uniform(0.4, 1.1), rng.uniform(0.3, 0.9), rng.uniform(0.4, 1.1)};
    Vec3 lo = {rng.uniform(0.2, room.hi[0] - size[0] - 0.2), rng.uniform(0.0, 0.4),
               rng.uniform(0.2, room.hi[2] - size[2] - 0.2)};
    boxes.push_back({lo, lo + size});
  }

  auto cam_pos = [&]() -> Vec3 {
    return {rng.uniform(0.4, room.hi[0] - 0.4), rng.uniform(1.6, room.hi[1] - 0.3),
            rng.uniform(0.4, room.hi[2] - 0.4)};
  };
  auto cam_target = [&]() -> Vec3 {
    return {rng.uniform(0.3 * room.hi[0], 0.7 * room.hi[0]), rng.uniform(0.3, 1.2),
            rng.uniform(0.3 * room.hi[2], 0.7 * room.hi[2])};
  };
  const Vec3 p0 = cam_pos(), p1 = cam_pos();
  const Vec3 t0 = cam_target(), t1 = cam_target();
  const double logf0 = std::log(rng.uniform(0.8, 1.6) * cfg.w);
  const double logf1 = std::log(rng.uniform(0.8, 1.6) * cfg.w);

  ClipSample clip;
  clip.frames = cfg.frames;
  clip.h = cfg.h;
  clip.w = cfg.w;
  clip.channels = cfg.channels;
  clip.seed = seed;
  clip.cameras = Tensor({cfg.frames, 8});

  const int n_noise = cfg.channels - 4;  // last 4 channels: normal + inverse depth
  std::vector<double> freqs(n_noise);
  for (int c = 0; c < n_noise; ++c) freqs[c] = 0.7 * std::pow(1.9, c);

  for (int f = 0; f < cfg.frames; ++f) {
    const double s = cfg.frames > 1 ? static_cast<double>(f) / (cfg.frames - 1) : 0.0;
    const Vec3 pos = (1 - s) * p0 + s * p1;
    const Vec3 tgt = (1 - s) * t0 + s * t1;
    const double focal = std::exp((1 - s) * logf0 + s * logf1);

    // Quantize orientation through the stored quaternion so the recorded
    // camera vector reproduces the exact rotation used for rendering.
    const auto quat = rot_to_quat(look_at(pos, tgt));
    const Rot rot = quat_to_rot(quat);

    clip.cameras.at(f, 0) = quat[0];
    clip.cameras.at(f, 1) = quat[1];
    clip.cameras.at(f, 2) = quat[2];
    clip.cameras.at(f, 3) = quat[3];
    clip.cameras.at(f, 4) = pos[0];
    clip.cameras.at(f, 5) = pos[1];
    clip.cameras.at(f, 6) = pos[2];
    clip.cameras.at(f, 7) = std::log(focal);

    const double cx = (cfg.w - 1) / 2.0, cy = (cfg.h - 1) / 2.0;
    Tensor img({cfg.h * cfg.w, cfg.channels});
    Tensor dep({cfg.h * cfg.w, 1});
    Tensor pmap({cfg.h * cfg.w, 3});
    for (int y = 0; y < cfg.h; ++y) {
      for (int x = 0; x < cfg.w; ++x) {
        const Vec3 dir_cam = {(x - cx) / focal, (y - cy) / focal, 1.0};
        const Vec3 dir = rot.apply(dir_cam);
        Hit best = hit_room(room, pos, dir);
        for (const auto& b : boxes) {
          Hit hb;
          if (hit_box(b, pos, dir, &hb) && hb.t < best.t) best = hb;
        }
        const Vec3 p = pos + best.t * dir;
        const int px = y * cfg.w + x;
        dep.at(px, 0) = best.t;  // z-depth: dir_cam has unit z
        pmap.at(px, 0) = p[0];
        pmap.at(px, 1) = p[1];
        pmap.at(px, 2) = p[2];
        for (int c = 0; c < n_noise; ++c)
          img.at(px, c) = value_noise(seed, freqs[c] * p, static_cast<uint64_t>(c) + 1);
        img.at(px, n_noise + 0) = best.normal[0];
        img.at(px, n_noise + 1) = best.normal[1];
        img.at(px, n_noise + 2) = best.normal[2];
        img.at(px, n_noise + 3) = 1.0 / (1.0 + best.t);
      }
    }
    img.ensure_finite("scene image");
    clip.images.push_back(std::move(img));
    clip.depth.push_back(std::move(dep));
    clip.pointmap.push_back(std::move(pmap));
  }
  return clip;
}

Tensor unproject_depth(const ClipSample& clip, int frame) {
  if (frame < 0 || frame >= clip.frames) throw std::runtime_error("unproject: bad frame");
  const std::array<double, 4> quat = {clip.cameras.at(frame, 0), clip.cameras.at(frame, 1), clip.cameras.at(frame, 2),
                                      clip.cameras.at(frame, 3)};
  const Vec3 pos = {clip.cameras.at(frame, 4), clip.cameras.at(frame, 5), clip.cameras.at(frame, 6)};
  const double focal = std::exp(clip.cameras.at(frame, 7));
  const Rot rot = quat_to_rot(quat);
  const double cx = (clip.w - 1) / 2.0, cy = (clip.h - 1) / 2.0;
  Tensor out({clip.h * clip.w, 3});
  for (int y = 0; y < clip.h; ++y)
    for (int x = 0; x < clip.w; ++x) {
      const int px = y * clip.w + x;
      const Vec3 dir = rot.apply({(x - cx) / focal, (y - cy) / focal, 1.0});
      const Vec3 p = pos + clip.depth[frame].at(px, 0) * dir;
      out.at(px, 0) = p[0];
      out.at(px, 1) = p[1];
      out.at(px, 2) = p[2];
    }
  return out;
}

namespace {

namespace fs = std::filesystem;

void write_tensors(const fs::path& file, const std::vector<Tensor>& ts) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("scene: cannot write " + file.string());
  for (const Tensor& t : ts)
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw std::runtime_error("scene: write failed for " + file.string());
}

std::vector<double> read_doubles(const fs::path& file, int64_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("scene: cannot read " + file.string());
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw std::runtime_error("scene: short read from " + file.string());
  return data;
}

}  // namespace

void save_clip(const std::string& dir, const ClipSample& clip) {
  fs::create_directories(dir);
  const fs::path root(dir);
  write_tensors(root / "images.bin", clip.images);
  write_tensors(root / "depth.bin", clip.depth);
  write_tensors(root / "pointmap.bin", clip.pointmap);
  write_tensors(root / "cameras.bin", {clip.cameras});

  nlohmann::json manifest;
  manifest["frames"] = clip.frames;
  manifest["h"] = clip.h;
  manifest["w"] = clip.w;
  manifest["channels"] = clip.channels;
  manifest["seed"] = clip.seed;
  manifest["tensors"] = {
      {"images", {{"file", "images.bin"}, {"shape", {clip.frames, clip.h * clip.w, clip.channels}}}},
      {"depth", {{"file", "depth.bin"}, {"shape", {clip.frames, clip.h * clip.w, 1}}}},
      {"pointmap", {{"file", "pointmap.bin"}, {"shape", {clip.frames, clip.h * clip.w, 3}}}},
      {"cameras", {{"file", "cameras.bin"}, {"shape", {clip.frames, 8}}}},
  };
  std::ofstream out(root / "manifest.json");
  out << manifest.dump(2);
  if (!out) throw std::runtime_error("scene: cannot write manifest in " + dir);
}

ClipSample load_clip(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::runtime_error("scene: missing manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(in);

  ClipSample clip;
  clip.frames = manifest.at("frames").get<int>();
  clip.h = manifest.at("h").get<int>();
  clip.w = manifest.at("w").get<int>();
  clip.channels = manifest.at("channels").get<int>();
  clip.seed = manifest.at("seed").get<uint64_t>();

  const auto& tensors = manifest.at("tensors");
  for (const char* name : {"images", "depth", "pointmap", "cameras"}) {
    if (!tensors.contains(name)) throw std::runtime_error(std::string("scene: manifest missing tensor ") + name);
    const fs::path file = root / tensors.at(name).at("file").get<std::string>();
    if (!fs::exists(file)) throw std::runtime_error("scene: manifest names missing file " + file.string());
  }

  const int p = clip.h * clip.w;
  auto images = read_doubles(root / tensors.at("images").at("file").get<std::string>(),
                             static_cast<int64_t>(clip.frames) * p * clip.channels);
  auto depth = read_doubles(root / tensors.at("depth").at("file").get<std::string>(),
                            static_cast<int64_t>(clip.frames) * p);
  auto pmap = read_doubles(root / tensors.at("pointmap").at("file").get<std::string>(),
                           static_cast<int64_t>(clip.frames) * p * 3);
  auto cams = read_doubles(root / tensors.at("cameras").at("file").get<std::string>(),
                           static_cast<int64_t>(clip.frames) * 8);
  for (int f = 0; f < clip.frames; ++f) {
    clip.images.emplace_back(std::vector<int>{p, clip.channels},
                             std::vector<double>(images.begin() + static_cast<int64_t>(f) * p * clip.channels,
                                                 images.begin() + static_cast<int64_t>(f + 1) * p * clip.channels));
    clip.depth.emplace_back(std::vector<int>{p, 1},
                            std::vector<double>(depth.begin() + static_cast<int64_t>(f) * p,
                                                depth.begin() + static_cast<int64_t>(f + 1) * p));
    clip.pointmap.emplace_back(std::vector<int>{p, 3},
                               std::vector<double>(pmap.begin() + static_cast<int64_t>(f) * p * 3,
                                                   pmap.begin() + static_cast<int64_t>(f + 1) * p * 3));
  }
  clip.cameras = Tensor({clip.frames, 8}, std::move(cams));
  return clip;
}

}  // namespace precut

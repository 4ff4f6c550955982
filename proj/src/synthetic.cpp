#include "fpba/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "fpba/floorplan.hpp"

namespace fpba {

namespace {

constexpr double kRayEps = 1e-9;

double cross2(double ax, double az, double bx, double bz) { return ax * bz - az * bx; }

// Ray parameter of the first crossing with a segment in the xz plane.
std::optional<double> hit_segment_xz(const FloorplanSegment& s, double ox, double oz, double dx,
                                     double dz) {
  const double ex = s.u2 - s.u1;
  const double ez = s.v2 - s.v1;
  const double denom = cross2(dx, dz, ex, ez);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double ax = s.u1 - ox;
  const double az = s.v1 - oz;
  const double t = cross2(ax, az, ex, ez) / denom;
  const double u = cross2(ax, az, dx, dz) / denom;
  if (t <= kRayEps || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

std::optional<double> hit_box(const Box& b, const Vec3& o, const Vec3& d) {
  double t0 = kRayEps;
  double t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < b.min[k] || o[k] > b.max[k]) return std::nullopt;
      continue;
    }
    double a = (b.min[k] - o[k]) / d[k];
    double c = (b.max[k] - o[k]) / d[k];
    if (a > c) std::swap(a, c);
    t0 = std::max(t0, a);
    t1 = std::min(t1, c);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

// splitmix64 finalizer over seed and stream id.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Vec3 pixel_ray(double u, double v, const CameraIntrinsics& intr) {
  return {(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
}

}  // namespace

Pose look_pose(const Vec3& eye, const Vec3& forward) {
  const Vec3 f = forward.normalized();
  Vec3 down = -Vec3::UnitY() + f.y() * f;
  if (down.norm() < 1e-9) throw Error(ErrorCode::kInvalidArgument, "forward is vertical");
  down.normalize();
  const Vec3 right = down.cross(f);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = f;
  return Pose::from_rt(r, eye);
}

std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& o, const Vec3& d) {
  std::optional<RayHit> best;
  auto consider = [&](double t, std::uint8_t label) {
    if (t > kRayEps && (!best || t < best->t)) best = RayHit{t, label};
  };
  if (std::abs(d.y()) > 1e-15) {
    consider((scene.floor_y - o.y()) / d.y(), labels::kFloor);
    consider((scene.ceiling_height - o.y()) / d.y(), labels::kCeiling);
  }
  for (const auto& s : scene.floorplan.segments) {
    if (auto t = hit_segment_xz(s, o.x(), o.z(), d.x(), d.z())) {
      const double y = o.y() + *t * d.y();
      if (y >= scene.floor_y && y <= scene.ceiling_height) consider(*t, labels::kWall);
    }
  }
  for (const auto& b : scene.boxes) {
    if (auto t = hit_box(b, o, d)) consider(*t, labels::kFurniture);
  }
  return best;
}

bool in_free_space(const SyntheticScene& scene, const Vec3& p, double wall_clearance) {
  if (!(p.y() > scene.floor_y && p.y() < scene.ceiling_height)) return false;
  const double dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (const auto& d : dirs) {
    bool enclosed = false;
    for (const auto& s : scene.floorplan.segments) {
      if (hit_segment_xz(s, p.x(), p.z(), d[0], d[1])) {
        enclosed = true;
        break;
      }
    }
    if (!enclosed) return false;
  }
  if (nearest_segment_distance(Vec2(p.x(), p.z()), scene.floorplan) < wall_clearance) {
    return false;
  }
  for (const auto& b : scene.boxes) {
    if ((p.array() >= b.min.array()).all() && (p.array() <= b.max.array()).all()) return false;
  }
  return true;
}

SyntheticData generate_scene(const Floorplan2D& fp, const SceneSpec& spec) {
  if (fp.segments.empty()) throw Error(ErrorCode::kEmptyFloorplan, "floorplan has no segments");
  spec.intrinsics.validate();
  if (spec.width <= 0 || spec.height <= 0 || !(spec.ceiling_height > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad image size or ceiling height");
  }
  SyntheticData out;
  SyntheticScene& scene = out.scene;
  scene.floorplan = fp;
  scene.ceiling_height = spec.ceiling_height;
  scene.boxes = spec.boxes;
  scene.trajectory = spec.trajectory;
  scene.intrinsics = spec.intrinsics;
  scene.width = spec.width;
  scene.height = spec.height;

  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    if (!in_free_space(scene, scene.trajectory[i].translation, spec.wall_clearance)) {
      throw Error(ErrorCode::kOutsideFreeSpace,
                  "trajectory pose " + std::to_string(i) + " is outside the floorplan free space");
    }
  }

  const auto& intr = spec.intrinsics;
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const Pose& pose = scene.trajectory[i];
    const Mat3 rot = pose.rotation_matrix();
    Frame f;
    f.index = static_cast<int>(i);
    f.intrinsics = intr;
    f.initial_pose = pose;
    f.depth = DepthImage(spec.width, spec.height, 0);
    f.labels = LabelImage(spec.width, spec.height, labels::kCeiling);
    std::mt19937_64 rng(mix_seed(spec.seed, i));
    std::normal_distribution<double> noise(0.0, spec.depth_noise);
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        const auto hit = cast_ray(scene, pose.translation, rot * pixel_ray(c, r, intr));
        if (!hit) continue;
        double z = hit->t;
        if (spec.depth_noise > 0.0) z += noise(rng);
        const double raw = std::round(z / intr.depth_scale);
        if (raw < 1.0 || raw > 65535.0) continue;
        f.depth.at(r, c) = static_cast<std::uint16_t>(raw);
        f.labels.at(r, c) = hit->label;
      }
    }
    out.frames.push_back(std::move(f));
  }

  // Landmarks: surface points seen through random pixels, kept when at least
  // two cameras see them unoccluded.
  if (scene.trajectory.empty()) return out;
  std::mt19937_64 rng(mix_seed(spec.seed, 0xA5A5A5A5ull));
  std::uniform_int_distribution<std::size_t> pick_frame(0, scene.trajectory.size() - 1);
  std::uniform_real_distribution<double> pick_u(0.0, spec.width - 1.0);
  std::uniform_real_distribution<double> pick_v(0.0, spec.height - 1.0);
  for (std::size_t k = 0; k < spec.landmark_samples; ++k) {
    const Pose& src = scene.trajectory[pick_frame(rng)];
    const double u0 = pick_u(rng);
    const double v0 = pick_v(rng);
    const Vec3 dir = src.rotation * pixel_ray(u0, v0, intr);
    const auto hit = cast_ray(scene, src.translation, dir);
    if (!hit) continue;
    Landmark lm;
    lm.position = src.translation + hit->t * dir;
    for (std::size_t j = 0; j < scene.trajectory.size(); ++j) {
      const Pose& pose = scene.trajectory[j];
      const Vec3 pc = pose.rotation.conjugate() * (lm.position - pose.translation);
      if (pc.z() < 0.05) continue;
      const Vec2 uv = project_point(pc, intr);
      if (uv.x() < 0.0 || uv.y() < 0.0 || uv.x() > spec.width - 1.0 ||
          uv.y() > spec.height - 1.0) {
        continue;
      }
      const auto h = cast_ray(scene, pose.translation, pose.rotation * (pc / pc.z()));
      if (!h || h->t < pc.z() * (1.0 - 1e-6) - 1e-9) continue;
      const int rr = static_cast<int>(std::lround(uv.y()));
      const int cc = static_cast<int>(std::lround(uv.x()));
      if (out.frames[j].depth.at(rr, cc) == 0) continue;
      lm.views.push_back({static_cast<std::uint32_t>(j), uv.x(), uv.y()});
    }
    if (lm.views.size() >= 2) scene.landmarks.push_back(std::move(lm));
  }
  return out;
}

std::vector<Pose> perturb_poses(std::span<const Pose> trajectory, const DriftSpec& drift,
                                std::uint64_t seed) {
  std::vector<Pose> out;
  if (trajectory.empty()) return out;
  out.reserve(trajectory.size());
  out.push_back(trajectory[0]);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double sr = drift.sigma_rot_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    Vec3 w;
    Vec3 dt;
    for (int k = 0; k < 3; ++k) w[k] = sr * unit(rng);
    for (int k = 0; k < 3; ++k) dt[k] = drift.sigma_t * unit(rng);
    Pose noise;
    noise.rotation = quat_exp(w);
    noise.translation = dt;
    const Pose rel = trajectory[i - 1].inverse() * trajectory[i];
    out.push_back(out.back() * rel * noise);
  }
  return out;
}

MatchSynthesis synth_matches(const SyntheticScene& scene, std::span<const Frame> frames,
                             const MatchSpec& spec) {
  if (frames.size() != scene.trajectory.size()) {
    throw Error(ErrorCode::kCountMismatch, "frames must follow the scene trajectory");
  }
  MatchSynthesis out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.pixel_noise);
  const double umax = scene.width - 1.0;
  const double vmax = scene.height - 1.0;
  std::vector<LandmarkView> views;
  for (const auto& lm : scene.landmarks) {
    views = lm.views;
    if (spec.pixel_noise > 0.0) {
      for (auto& v : views) {
        v.u = std::clamp(v.u + noise(rng), 0.0, umax);
        v.v = std::clamp(v.v + noise(rng), 0.0, vmax);
      }
    }
    for (std::size_t a = 0; a < views.size(); ++a) {
      for (std::size_t b = a + 1; b < views.size(); ++b) {
        out.matches.push_back({frames[views[a].frame].index, views[a].u, views[a].v,
                               frames[views[b].frame].index, views[b].u, views[b].v});
      }
    }
  }

  const auto wrong = static_cast<std::size_t>(
      std::llround(std::clamp(spec.mismatch_fraction, 0.0, 1.0) * out.matches.size()));
  if (wrong == 0) return out;
  std::vector<std::size_t> order(out.matches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(wrong);
  std::sort(order.begin(), order.end());
  std::uniform_int_distribution<int> pick_c(0, scene.width - 1);
  std::uniform_int_distribution<int> pick_r(0, scene.height - 1);
  std::vector<int> position_of;  // Frame::index -> position
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto idx = static_cast<std::size_t>(frames[i].index);
    if (position_of.size() <= idx) position_of.resize(idx + 1, -1);
    position_of[idx] = static_cast<int>(i);
  }
  for (std::size_t m : order) {
    KeypointMatch& km = out.matches[m];
    const Frame& fb = frames[position_of[static_cast<std::size_t>(km.frame_b)]];
    // A pixel far from the true one, with depth when possible.
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int c = pick_c(rng);
      const int r = pick_r(rng);
      if (std::hypot(c - km.ub, r - km.vb) < 20.0) continue;
      km.ub = c;
      km.vb = r;
      if (fb.depth.at(r, c) != 0) break;
    }
    out.mismatched.push_back(m);
  }
  return out;
}

MatchSet landmark_match_set(const SyntheticScene& scene) {
  MatchSet set;
  for (const auto& lm : scene.landmarks) {
    for (std::size_t a = 0; a < lm.views.size(); ++a) {
      const Pose& pa = scene.trajectory[lm.views[a].frame];
      const Vec3 ca = pa.rotation.conjugate() * (lm.position - pa.translation);
      for (std::size_t b = a + 1; b < lm.views.size(); ++b) {
        const Pose& pb = scene.trajectory[lm.views[b].frame];
        const Vec3 cb = pb.rotation.conjugate() * (lm.position - pb.translation);
        set.pairs.push_back({lm.views[a].frame, ca, lm.views[b].frame, cb});
      }
    }
  }
  return set;
}

Floorplan2D three_room_floorplan() {
  Floorplan2D fp;
  fp.segments = {
      {0, 0, 8, 0},     {8, 0, 8, 6},     {8, 6, 0, 6},   {0, 6, 0, 0},
      {4, 0, 4, 1},     {4, 2, 4, 4},     {4, 5, 4, 6},   {4, 3, 5.5, 3},
      {6.5, 3, 8, 3},
  };
  return fp;
}

std::vector<Pose> loop_trajectory(std::span<const Vec2> waypoints, int frames,
                                  double camera_height, double pitch_min_deg,
                                  double pitch_max_deg, double sway_deg) {
  if (waypoints.size() < 2 || frames < 1) {
    throw Error(ErrorCode::kInvalidArgument, "loop needs two waypoints and one frame");
  }
  const std::size_t n = waypoints.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cum[i + 1] = cum[i] + (waypoints[(i + 1) % n] - waypoints[i]).norm();
  }
  const double total = cum[n];
  auto at = [&](double s) {
    s = std::fmod(s, total);
    if (s < 0.0) s += total;
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()) - 1, n - 1);
    const double len = cum[seg + 1] - cum[seg];
    const double a = len > 0.0 ? (s - cum[seg]) / len : 0.0;
    return Vec2(waypoints[seg] + a * (waypoints[(seg + 1) % n] - waypoints[seg]));
  };
  const double deg = std::numbers::pi / 180.0;
  const double pitch_mid = 0.5 * (pitch_min_deg + pitch_max_deg) * deg;
  const double pitch_amp = 0.5 * (pitch_max_deg - pitch_min_deg) * deg;
  std::vector<Pose> out;
  for (int i = 0; i < frames; ++i) {
    const double s = total * i / frames;
    const Vec2 p = at(s);
    const Vec2 h = (at(s + 0.6) - at(s - 0.6)).normalized();
    const double phase = 2.0 * std::numbers::pi * i / frames;
    const Vec3 flat = yaw_rotation(sway_deg * deg * std::sin(5.0 * phase)) * Vec3(h.x(), 0.0, h.y());
    const double pitch = pitch_mid + pitch_amp * std::sin(7.0 * phase);
    const Vec3 fwd = std::cos(pitch) * flat + std::sin(pitch) * Vec3::UnitY();
    out.push_back(look_pose(Vec3(p.x(), camera_height, p.y()), fwd));
  }
  return out;
}

SceneSpec three_room_spec(int frames, std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.boxes = {
      {{0.3, 0.0, 2.5}, {1.0, 0.8, 3.5}},
      {{7.0, 0.0, 0.3}, {7.7, 0.7, 1.0}},
      {{6.8, 0.0, 5.0}, {7.7, 1.0, 5.7}},
  };
  const std::vector<Vec2> waypoints = {{2.0, 1.5}, {4.0, 1.5}, {6.0, 1.5}, {6.0, 3.0},
                                       {6.0, 4.5}, {4.0, 4.5}, {2.0, 4.5}, {2.0, 3.0}};
  spec.trajectory = loop_trajectory(waypoints, frames);
  return spec;
}

}  // namespace fpba

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fpba/alignment.hpp"
#include "fpba/ba.hpp"
#include "fpba/geometry.hpp"
#include "fpba/io.hpp"
#include "fpba/semantic_clouds.hpp"
#include "fpba/synthetic.hpp"

namespace testing {

using fpba::Pose;
using fpba::Vec3;
using fpba::Vec6;

inline std::vector<Vec3> plane_grid(int n, double spacing, double y = 0.0) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pts.emplace_back(i * spacing, y, j * spacing);
  return pts;
}

inline Pose random_pose(std::mt19937_64& rng, double t_scale = 1.0, double rot_scale = 0.5) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 w(g(rng), g(rng), g(rng));
  Vec3 t(g(rng), g(rng), g(rng));
  Pose p;
  p.rotation = fpba::quat_exp(w * rot_scale);
  p.translation = t * t_scale;
  return p;
}

/// Per-frame tangent-space gradient of `f` by central differences.
template <typename F>
std::vector<Vec6> numeric_gradient(F&& f, std::span<const Pose> poses, double eps = 1e-6) {
  std::vector<Vec6> grad(poses.size(), Vec6::Zero());
  std::vector<Pose> work(poses.begin(), poses.end());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    for (int k = 0; k < 6; ++k) {
      Vec6 d = Vec6::Zero();
      d[k] = eps;
      work[i] = poses[i].retract(d);
      const double plus = f(std::span<const Pose>(work));
      work[i] = poses[i].retract(-d);
      const double minus = f(std::span<const Pose>(work));
      work[i] = poses[i];
      grad[i][k] = (plus - minus) / (2.0 * eps);
    }
  }
  return grad;
}

/// Largest component error relative to the largest gradient magnitude.
inline double max_relative_error(std::span<const Vec6> a, std::span<const Vec6> b) {
  double scale = 0.0, err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::max(a[i].cwiseAbs().maxCoeff(), b[i].cwiseAbs().maxCoeff()));
    err = std::max(err, (a[i] - b[i]).cwiseAbs().maxCoeff());
  }
  return scale > 0.0 ? err / scale : err;
}

/// Anchored cloud from world points seen by the given frames (round robin).
inline fpba::AnchoredCloud anchored(std::span<const Vec3> world, std::span<const Pose> poses) {
  fpba::AnchoredCloud c;
  for (std::size_t i = 0; i < world.size(); ++i) {
    const std::uint32_t f = static_cast<std::uint32_t>(i % poses.size());
    c.local.push_back(poses[f].inverse() * world[i]);
    c.cloud.points.push_back(world[i]);
    c.cloud.provenance.push_back({f, 0, static_cast<std::uint32_t>(i)});
  }
  return c;
}

/// Walls of `fp` extruded to [0, wall_height], the floor over the plan's
/// bounding box and one furniture box, all mapped through `t` (floorplan to
/// scan) and jittered by `noise`.
inline fpba::PointCloud scan_from_floorplan(const fpba::Floorplan2D& fp,
                                            const fpba::SimilarityTransform& t,
                                            std::uint64_t seed, double density = 150.0,
                                            double wall_height = 2.5, double noise = 0.002) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, noise);
  std::vector<Vec3> pts;
  double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
  for (const auto& s : fp.segments) {
    const auto n = static_cast<int>(s.length() * wall_height * density);
    for (int i = 0; i < n; ++i) {
      const fpba::Vec2 uv = s.a() + u01(rng) * (s.b() - s.a());
      pts.emplace_back(uv.x(), u01(rng) * wall_height, uv.y());
    }
    lo_u = std::min({lo_u, s.u1, s.u2});
    hi_u = std::max({hi_u, s.u1, s.u2});
    lo_v = std::min({lo_v, s.v1, s.v2});
    hi_v = std::max({hi_v, s.v1, s.v2});
  }
  const auto nf = static_cast<int>((hi_u - lo_u) * (hi_v - lo_v) * density);
  for (int i = 0; i < nf; ++i)
    pts.emplace_back(lo_u + u01(rng) * (hi_u - lo_u), 0.0, lo_v + u01(rng) * (hi_v - lo_v));
  // 0.6 x 0.7 x 0.6 box near the first corner.
  const Vec3 b0(lo_u + 0.5, 0.0, lo_v + 0.5), b1 = b0 + Vec3(0.6, 0.7, 0.6);
  for (int i = 0; i < static_cast<int>(0.36 * density); ++i)
    pts.emplace_back(b0.x() + 0.6 * u01(rng), b1.y(), b0.z() + 0.6 * u01(rng));
  for (int i = 0; i < static_cast<int>(4 * 0.42 * density); ++i) {
    const double a = 0.6 * u01(rng), h = 0.7 * u01(rng);
    switch (i % 4) {
      case 0: pts.emplace_back(b0.x() + a, h, b0.z()); break;
      case 1: pts.emplace_back(b0.x() + a, h, b1.z()); break;
      case 2: pts.emplace_back(b0.x(), h, b0.z() + a); break;
      default: pts.emplace_back(b1.x(), h, b0.z() + a); break;
    }
  }
  fpba::PointCloud cloud;
  for (const auto& p : pts) {
    const Vec3 q = t.apply(p) + Vec3(jitter(rng), jitter(rng), jitter(rng));
    cloud.points.push_back(q);
  }
  return cloud;
}

inline double angle_diff(double a, double b) {
  return std::abs(std::remainder(a - b, 2.0 * 3.14159265358979323846));
}

// Random problem with 5 frames and 100 residuals per term.
struct Instance {
  std::vector<Pose> poses;
  fpba::MatchSet matches;
  fpba::AnchoredCloud floor;
  fpba::FloorModel floor_model;
  fpba::AnchoredCloud walls;
  fpba::Floorplan3D fp3d;
  fpba::FixedWallAssignment assignment;
};

inline Instance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<std::uint32_t> frame(0, 4);
  Instance in;
  for (int i = 0; i < 5; ++i) in.poses.push_back(random_pose(rng, 1.0, 0.6));
  for (int i = 0; i < 100; ++i) {
    std::uint32_t a = frame(rng), b = frame(rng);
    if (a == b) b = (a + 1) % 5;
    in.matches.pairs.push_back({a, Vec3(u(rng), u(rng), 2 + u(rng)), b,
                                Vec3(u(rng), u(rng), 2 + u(rng))});
  }
  auto add = [&](fpba::AnchoredCloud& c, const Vec3& world, std::uint32_t f) {
    c.local.push_back(in.poses[f].inverse() * world);
    c.cloud.points.push_back(world);
    c.cloud.provenance.push_back({f, 0, 0});
  };
  for (int i = 0; i < 100; ++i) add(in.floor, Vec3(3 * u(rng), 0.3 * u(rng), 3 * u(rng)), frame(rng));
  in.floor_model.plane = fpba::Plane::from_point_normal({0, 0.05, 0}, Vec3(0.1, 1, -0.05).normalized());

  in.fp3d = fpba::build_floorplan3d(fpba::three_room_floorplan(), 0.0, 2.6, 40.0, seed);
  std::uniform_int_distribution<std::size_t> pick(0, in.fp3d.points.size() - 1);
  for (int i = 0; i < 100; ++i) {
    const Vec3 world = in.fp3d.points[pick(rng)] + 0.2 * Vec3(u(rng), u(rng), u(rng));
    add(in.walls, world, frame(rng));
    in.assignment.pairs.push_back(
        {static_cast<std::uint32_t>(i),
         static_cast<std::uint32_t>(rng() % in.fp3d.wall_planes.size())});
  }
  return in;
}

inline fpba::PointCloud gaussian_cloud(double sigma, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, sigma);
  fpba::PointCloud c;
  for (int i = 0; i < n; ++i) c.points.emplace_back(g(rng), g(rng), g(rng));
  return c;
}

inline fpba::PointCloud plane_cloud(int n, double noise, std::uint64_t seed, double layer_gap = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 2);
  std::normal_distribution<double> g(0, noise > 0 ? noise : 1.0);
  fpba::PointCloud c;
  for (int i = 0; i < n; ++i) {
    const double y = (noise > 0 ? g(rng) : 0.0) + (i % 2 ? 0.5 : -0.5) * layer_gap;
    c.points.emplace_back(u(rng), y, u(rng));
  }
  return c;
}

// 1 x 1 m room, camera close to a corner so every depth fits a 10 um scale.
inline fpba::SyntheticData corner_scene(std::size_t views) {
  fpba::SceneSpec spec;
  spec.ceiling_height = 1.0;
  spec.intrinsics.depth_scale = 1e-5;
  for (std::size_t i = 0; i < views; ++i) {
    const double a = 0.03 * static_cast<double>(i);
    spec.trajectory.push_back(
        fpba::look_pose({0.3 + a, 0.3, 0.3 - a}, Vec3(-1.0 - a, -1.0, -1.0 + a).normalized()));
  }
  return fpba::generate_scene({{{0, 0, 1, 0}, {1, 0, 1, 1}, {1, 1, 0, 1}, {0, 1, 0, 0}}, 1.0}, spec);
}

inline double brute_segment_distance(const fpba::Vec2& p, const fpba::FloorplanSegment& s) {
  const fpba::Vec2 a = s.a(), b = s.b();
  double best = std::min((p - a).norm(), (p - b).norm());
  const fpba::Vec2 d = b - a;
  const double t = (p - a).dot(d) / d.squaredNorm();
  if (t > 0.0 && t < 1.0) best = std::min(best, (p - (a + t * d)).norm());
  return best;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fpba_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

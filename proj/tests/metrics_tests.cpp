#include <numbers>
#include <random>

#include "doctest.h"
#include "fpba/metrics.hpp"
#include "fpba/synthetic.hpp"
#include "support.hpp"

using namespace fpba;
using testing::brute_segment_distance;
using testing::corner_scene;
using testing::gaussian_cloud;
using testing::plane_cloud;

namespace {

PointCloud moved(const PointCloud& c, const Pose& p) {
  PointCloud out = c;
  for (auto& q : out.points) q = p * q;
  return out;
}

std::vector<Pose> poses_of(std::span<const Frame> frames) {
  std::vector<Pose> out;
  for (const auto& f : frames) out.push_back(f.initial_pose);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("map entropy of a Gaussian blob") {
  NeighborhoodOptions opts;
  opts.max_queries = 400;
  const double sigma = 0.01;
  const double closed = 0.5 * std::log(std::pow(2 * std::numbers::pi * std::numbers::e, 3) *
                                       std::pow(sigma, 6));
  const double value = mme(gaussian_cloud(sigma, 3000, 1), opts);
  CHECK(std::abs(value - closed) < 0.05 * std::abs(closed));
  CHECK(mme(gaussian_cloud(0.005, 3000, 1), opts) < value);

  PointCloud sparse;
  sparse.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(mme(sparse), Error);
}

TEST_CASE("plane variance") {
  NeighborhoodOptions opts;
  opts.max_queries = 2000;
  CHECK(mpv(plane_cloud(20000, 0.0, 2), opts) < 1e-12);

  const double sigma = 0.002;
  CHECK(std::abs(mpv(plane_cloud(20000, sigma, 3), opts) - sigma * sigma) < 0.1 * sigma * sigma);

  const double layered = mpv(plane_cloud(20000, 0.0, 4, 0.01), opts);
  CHECK(std::abs(layered - 0.005 * 0.005) < 0.1 * 0.005 * 0.005);
  CHECK(layered > mpv(plane_cloud(20000, 0.0, 4), opts));
}

TEST_CASE("entropy and plane variance ignore rigid motion") {
  std::mt19937_64 rng(5);
  const Pose g = testing::random_pose(rng, 5.0, 1.0);
  NeighborhoodOptions opts;
  opts.max_queries = 1000;
  const PointCloud c = plane_cloud(10000, 0.003, 6);
  CHECK(std::abs(mpv(c, opts) - mpv(moved(c, g), opts)) < 1e-9);
  CHECK(std::abs(mme(c, opts) - mme(moved(c, g), opts)) < 1e-9);
  CHECK(mpv(c, opts) >= 0.0);
}

TEST_CASE("metrics repeat under a fixed seed") {
  NeighborhoodOptions opts;
  opts.max_queries = 300;
  opts.seed = 9;
  const PointCloud c = plane_cloud(5000, 0.003, 7);
  CHECK(mpv(c, opts) == mpv(c, opts));
  CHECK(mme(c, opts) == mme(c, opts));
}

TEST_CASE("orthogonal-plane variance of a room corner") {
  const SyntheticData data = corner_scene(3);
  const auto poses = poses_of(data.frames);
  const MomResult clean = mom(data.frames, poses);
  CHECK(clean.frames_used == 3);
  CHECK(clean.value < 1e-10);

  std::mt19937_64 rng(2);
  std::vector<Pose> noisy;
  for (const auto& p : poses) noisy.push_back(p * testing::random_pose(rng, 0.01, 0.01));
  CHECK(mom(data.frames, noisy).value > clean.value);

  const Pose g = testing::random_pose(rng, 3.0, 1.0);
  std::vector<Pose> shifted;
  for (const auto& p : noisy) shifted.push_back(g * p);
  CHECK(std::abs(mom(data.frames, shifted).value - mom(data.frames, noisy).value) < 1e-9);
}

TEST_CASE("frames without three planes are skipped") {
  std::vector<Frame> frames = corner_scene(1).frames;
  Frame flat;
  flat.index = 7;
  flat.intrinsics = frames[0].intrinsics;
  flat.depth = DepthImage(160, 120, 50000);
  flat.labels = LabelImage(160, 120, 0);
  frames.push_back(flat);
  const MomResult r = mom(frames, poses_of(frames));
  CHECK(r.frames_used == 1);
  CHECK(r.skipped_frames == std::vector<int>{7});
}

TEST_CASE("nearest neighbor distance") {
  PointCloud ref;
  for (const auto& p : testing::plane_grid(100, 0.01)) ref.points.push_back(p);
  CHECK(nnd(ref, ref) == 0.0);
  PointCloud up = ref;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  up.points.clear();
  for (int i = 0; i < 500; ++i) up.points.emplace_back(u(rng), 0.05, u(rng));
  const double d = nnd(up, ref);
  CHECK(d >= 0.05);
  CHECK(d <= std::hypot(0.05, 0.01 / std::sqrt(2.0)));

  PointCloud subset;
  subset.points.assign(ref.points.begin(), ref.points.begin() + 100);
  CHECK(nnd(subset, ref) == 0.0);
  CHECK(nnd(ref, subset) > 0.0);

  PointCloud further = up;
  for (auto& p : further.points) p.y() += 0.05;
  CHECK(nnd(further, ref) > d);
}

TEST_CASE("nearest segment distance") {
  const Floorplan2D fp = three_room_floorplan();
  const Floorplan3D fp3d = build_floorplan3d(fp, 0.0, 2.6, 100.0);
  PointCloud on;
  on.points = fp3d.points;
  CHECK(nsd(on, fp) < 1e-9);

  const Floorplan2D wall{{{0, 0, 5, 0}}, 1.0};
  PointCloud off;
  for (int i = 0; i < 50; ++i) off.points.emplace_back(0.1 * i, 1.0, 0.1);
  CHECK(nsd(off, wall) == doctest::Approx(0.1));
  PointCloud further = off;
  for (auto& p : further.points) p.z() += 0.1;
  CHECK(nsd(further, wall) > nsd(off, wall));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> x(-1, 9), z(-1, 7);
  PointCloud random;
  for (int i = 0; i < 2000; ++i) random.points.emplace_back(x(rng), 1.0, z(rng));
  double sum = 0.0;
  for (const auto& p : random.points) {
    double best = 1e300;
    for (const auto& s : fp.segments) best = std::min(best, brute_segment_distance({p.x(), p.z()}, s));
    sum += best;
  }
  CHECK(std::abs(nsd(random, fp) - sum / random.size()) < 1e-12);
}

TEST_CASE("trajectory error after rigid alignment") {
  std::mt19937_64 rng(8);
  std::vector<Pose> gt;
  for (int i = 0; i < 30; ++i) gt.push_back(testing::random_pose(rng, 2.0, 1.0));
  CHECK(ate(gt, gt) < 1e-12);
  const Pose g = testing::random_pose(rng, 4.0, 1.0);
  std::vector<Pose> moved_gt, bumped;
  for (const auto& p : gt) moved_gt.push_back(g * p);
  CHECK(ate(moved_gt, gt) < 1e-9);
  bumped = gt;
  bumped[3].translation += Vec3(0.3, 0, 0);
  CHECK(ate(bumped, gt) > 0.0);
  CHECK(ate(bumped, gt) < 0.3 / std::sqrt(30.0) + 1e-12);
}

TEST_CASE("report format") {
  MetricsReport r;
  r.mpv = 1.5e-5;
  r.warnings.push_back("no floorplan");
  const std::string s = r.format();
  CHECK(s.find("nnd: absent") != std::string::npos);
  CHECK(s.find("mpv: 1.5e-05") != std::string::npos);
  CHECK(s.find("warning: no floorplan") != std::string::npos);
  CHECK(s.find("ate:") == std::string::npos);
}

}  // TEST_SUITE

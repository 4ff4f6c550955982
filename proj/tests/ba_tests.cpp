#include <numbers>
#include <random>

#include "doctest.h"
#include "fpba/ba.hpp"
#include "fpba/metrics.hpp"
#include "fpba/synthetic.hpp"
#include "support.hpp"

using namespace fpba;
using testing::Instance;
using testing::random_instance;

namespace {

template <typename F>
double gradient_error(const Instance& in, F&& loss) {
  const LossEval e = loss(std::span<const Pose>(in.poses));
  const auto numeric = testing::numeric_gradient(
      [&](std::span<const Pose> p) { return loss(p).value; }, in.poses);
  return testing::max_relative_error(e.grad, numeric);
}

// One wall along x at z = 0 and points exactly on it, seen by two frames.
struct WallScene {
  std::vector<Pose> poses;
  Floorplan3D fp3d;
  AnchoredCloud walls;
};

WallScene one_wall_scene(double offset) {
  WallScene s;
  std::mt19937_64 rng(12);
  s.poses = {testing::random_pose(rng, 0.5, 0.3), testing::random_pose(rng, 0.5, 0.3)};
  s.fp3d = build_floorplan3d({{{0, 0, 4, 0}}, 1.0}, 0.0, 2.5, 200.0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Vec3> world;
  for (int i = 0; i < 200; ++i) world.emplace_back(4 * u(rng), 2.5 * u(rng), offset * (i % 2 ? 1 : -1));
  s.walls = testing::anchored(world, s.poses);
  return s;
}

}  // namespace

TEST_SUITE("ba") {

TEST_CASE("strategy names") {
  CHECK(parse_walls_strategy("np") == WallsStrategy::kNearestPoint);
  CHECK(parse_walls_strategy("iterative_nearest_wall") == WallsStrategy::kIterativeNearestWall);
  CHECK(parse_walls_strategy("fnw") == WallsStrategy::kFixedNearestWall);
  CHECK_FALSE(parse_walls_strategy("nearest"));
  CHECK(to_string(WallsStrategy::kFixedNearestWall) == "fnw");
}

TEST_CASE("weight presets") {
  const BAConfig a;
  CHECK(a.lambda_floor == 10.0);
  CHECK(a.lambda_walls == 0.6);
  CHECK(a.lr_initial == 1e-3);
  CHECK(a.lr_reduced == 1e-4);
  CHECK(a.lr_switch_step == 20000);
  CHECK(a.convergence_eps == 1e-5);
  const BAConfig b = captured_scan_config();
  CHECK(b.lambda_floor == 10.0);
  CHECK(b.lambda_walls == 0.5);
  BAConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("geometric loss closed form") {
  MatchSet m;
  m.pairs.push_back({0, {0, 0, 1}, 1, {0, 0, 2}});
  const std::vector<Pose> poses(2);
  CHECK(geometric_loss(m, poses).value == doctest::Approx(1.0));
}

TEST_CASE("geometric loss vanishes on consistent landmarks") {
  const SyntheticData data = generate_scene(three_room_floorplan(), three_room_spec(20, 1));
  const MatchSet m = landmark_match_set(data.scene);
  REQUIRE(m.pairs.size() > 100);
  CHECK(geometric_loss(m, data.scene.trajectory).value < 1e-9);

  // Any poses, as long as the camera points come from the same landmarks.
  std::mt19937_64 rng(3);
  std::vector<Pose> other;
  for (std::size_t i = 0; i < data.scene.trajectory.size(); ++i)
    other.push_back(testing::random_pose(rng, 2.0, 1.0));
  MatchSet moved;
  for (const auto& lm : data.scene.landmarks)
    for (std::size_t a = 0; a + 1 < lm.views.size(); ++a) {
      const auto fa = lm.views[a].frame, fb = lm.views[a + 1].frame;
      moved.pairs.push_back({fa, other[fa].inverse() * lm.position, fb,
                             other[fb].inverse() * lm.position});
    }
  CHECK(geometric_loss(moved, other).value < 1e-9);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    const Instance in = random_instance(seed);
    CHECK(gradient_error(in, [&](auto p) { return geometric_loss(in.matches, p); }) < 1e-4);
    CHECK(gradient_error(in, [&](auto p) { return floor_loss(in.floor, p, in.floor_model); }) <
          1e-4);
    CHECK(gradient_error(in, [&](auto p) {
            return walls_loss_nearest_point(in.walls, p, in.fp3d);
          }) < 1e-4);
    CHECK(gradient_error(in, [&](auto p) {
            return walls_loss_iterative_nearest_wall(in.walls, p, in.fp3d);
          }) < 1e-4);
    CHECK(gradient_error(in, [&](auto p) {
            return walls_loss_fixed_nearest_wall(in.walls, p, in.assignment, in.fp3d);
          }) < 1e-4);
  }
}

TEST_CASE("total loss gradient and weights") {
  const Instance in = random_instance(4);
  BAProblem prob{5, &in.matches, &in.floor, &in.floor_model, &in.walls, &in.fp3d, &in.assignment};
  BAConfig cfg;
  const TotalLoss t = total_loss(prob, in.poses, cfg);
  const auto numeric = testing::numeric_gradient(
      [&](std::span<const Pose> p) { return total_loss(prob, p, cfg).total; }, in.poses);
  CHECK(testing::max_relative_error(t.grad, numeric) < 1e-4);
  CHECK(t.total == doctest::Approx(t.geom + 10.0 * t.floor + 0.6 * t.walls));

  cfg.lambda_floor = 0.0;
  cfg.lambda_walls = 0.0;
  const TotalLoss g = total_loss(prob, in.poses, cfg);
  CHECK(g.total == geometric_loss(in.matches, in.poses).value / 100.0);
}

TEST_CASE("floor loss values") {
  const std::vector<Pose> poses(1);
  FloorModel model;
  model.plane = Plane::from_point_normal({0, 0, 0}, Vec3::UnitY());
  AnchoredCloud on = testing::anchored(testing::plane_grid(5, 0.2), poses);
  CHECK(floor_loss(on, poses, model).value == 0.0);
  const std::vector<Vec3> one{{0.3, 0.2, 1.0}};
  CHECK(floor_loss(testing::anchored(one, poses), poses, model).value == doctest::Approx(0.2));
}

TEST_CASE("nearest point loss values") {
  const std::vector<Pose> poses(1);
  const Floorplan3D fp3d = build_floorplan3d({{{0, 0, 2, 0}}, 1.0}, 0.0, 2.0, 500.0);
  const AnchoredCloud on = testing::anchored(fp3d.points, poses);
  CHECK(walls_loss_nearest_point(on, poses, fp3d).value == 0.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Vec3> resampled;
  for (int i = 0; i < 500; ++i) resampled.emplace_back(2 * u(rng), 2 * u(rng), 0.0);
  const LossEval e = walls_loss_nearest_point(testing::anchored(resampled, poses), poses, fp3d);
  CHECK(e.value / e.count < 2.0 / std::sqrt(500.0));

  const std::vector<Vec3> off{fp3d.points[100] + Vec3(0, 0, 0.3)};
  CHECK(walls_loss_nearest_point(testing::anchored(off, poses), poses, fp3d).value ==
        doctest::Approx(0.3));
}

TEST_CASE("iterative nearest wall: zero on walls and lowest-index ties") {
  const std::vector<Pose> poses(1);
  const Floorplan3D fp3d = build_floorplan3d(three_room_floorplan(), 0.0, 2.6, 100.0);
  CHECK(walls_loss_iterative_nearest_wall(testing::anchored(fp3d.points, poses), poses, fp3d)
            .value < 1e-12);

  // Two sampled points on perpendicular walls, query equidistant from both.
  Floorplan3D tie;
  tie.points = {{1, 1, 0}, {0, 1, 1}};
  tie.point_segment = {0, 1};
  tie.wall_planes = {segment_plane({0, 0, 2, 0}), segment_plane({0, 0, 0, 2})};
  tie.tree = KdTree(tie.points);
  const Vec3 q(0.8, 1.0, 0.8);
  REQUIRE((q - tie.points[0]).norm() == (q - tie.points[1]).norm());
  const LossEval e =
      walls_loss_iterative_nearest_wall(testing::anchored(std::vector<Vec3>{q}, poses), poses, tie);
  CHECK(e.value == doctest::Approx(std::abs(tie.wall_planes[0].signed_distance(q))));
  CHECK(e.value == doctest::Approx(0.8));
}

TEST_CASE("iterative and fixed strategies agree on one wall") {
  const WallScene s = one_wall_scene(0.07);
  FixedWallAssignment all;
  for (std::uint32_t i = 0; i < s.walls.size(); ++i) all.pairs.push_back({i, 0});
  const LossEval inw = walls_loss_iterative_nearest_wall(s.walls, s.poses, s.fp3d);
  const LossEval fnw = walls_loss_fixed_nearest_wall(s.walls, s.poses, all, s.fp3d);
  CHECK(std::abs(inw.value - fnw.value) < 1e-9);
  CHECK(inw.value == doctest::Approx(200 * 0.07));
  for (std::size_t f = 0; f < 2; ++f) CHECK((inw.grad[f] - fnw.grad[f]).norm() < 1e-9);
}

TEST_CASE("fixed nearest wall values") {
  const WallScene on = one_wall_scene(0.0);
  FixedWallAssignment all;
  for (std::uint32_t i = 0; i < on.walls.size(); ++i) all.pairs.push_back({i, 0});
  CHECK(walls_loss_fixed_nearest_wall(on.walls, on.poses, all, on.fp3d).value < 1e-12);

  const std::vector<Pose> id(1);
  std::vector<Vec3> off;
  for (int i = 0; i < 10; ++i) off.emplace_back(0.3 * i, 1.0, i % 2 ? 0.1 : -0.1);
  FixedWallAssignment ten;
  for (std::uint32_t i = 0; i < 10; ++i) ten.pairs.push_back({i, 0});
  const LossEval e = walls_loss_fixed_nearest_wall(testing::anchored(off, id), id, ten, on.fp3d);
  CHECK(e.value == doctest::Approx(1.0));
  CHECK(e.value >= 0.0);
}

TEST_CASE("wall clustering") {
  // Scan walls at z = 0 and z = 3, floorplan walls at the same places.
  const Floorplan2D fp{{{0, 0, 5, 0}, {5, 3, 0, 3}}, 1.0};
  const Floorplan3D fp3d = build_floorplan3d(fp, 0.0, 2.5, 50.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  PointCloud walls;
  for (int i = 0; i < 400; ++i) {
    const double z = i % 2 ? 3.02 : -0.01;
    walls.points.emplace_back(5 * u(rng), 2.5 * u(rng), z);
    walls.normals.push_back(Vec3(0, 0, i % 2 ? -1.0 : 1.0));
  }
  const FixedWallAssignment a = cluster_walls(walls, fp3d);
  CHECK(a.matched_planes == 2);
  REQUIRE(a.pairs.size() == 400);
  for (const auto& [p, plane] : a.pairs) {
    const double wall_z = -fp3d.wall_planes[plane].offset / fp3d.wall_planes[plane].normal.z();
    CHECK(std::abs(wall_z - walls.points[p].z()) < 0.05);
  }

  // A 45 degree wall has no parallel partner.
  PointCloud slanted = walls;
  const Vec3 n = Vec3(1, 0, 1).normalized();
  for (int i = 0; i < 200; ++i) {
    const double s = 3 * u(rng);
    slanted.points.emplace_back(1 + s / std::sqrt(2.0), 2.5 * u(rng), 1 - s / std::sqrt(2.0));
    slanted.normals.push_back(n);
  }
  const FixedWallAssignment b = cluster_walls(slanted, fp3d);
  CHECK(b.pairs.size() == 400);
  for (const auto& pr : b.pairs) CHECK(pr.point < 400);

  const FixedWallAssignment empty = cluster_walls(PointCloud{}, fp3d);
  CHECK(empty.pairs.empty());
  CHECK(empty.warning);
}

TEST_CASE("geometric loss ignores a global motion, the anchors do not") {
  const Instance in = random_instance(5);
  std::mt19937_64 rng(6);
  const Pose g = testing::random_pose(rng, 1.0, 0.5);
  std::vector<Pose> moved;
  for (const auto& p : in.poses) moved.push_back(g * p);
  CHECK(geometric_loss(in.matches, moved).value ==
        doctest::Approx(geometric_loss(in.matches, in.poses).value).epsilon(1e-12));
  CHECK(std::abs(floor_loss(in.floor, moved, in.floor_model).value -
                 floor_loss(in.floor, in.poses, in.floor_model).value) > 1e-3);
  CHECK(std::abs(walls_loss_fixed_nearest_wall(in.walls, moved, in.assignment, in.fp3d).value -
                 walls_loss_fixed_nearest_wall(in.walls, in.poses, in.assignment, in.fp3d).value) >
        1e-3);
}

TEST_CASE("plain gradient steps on a floor-only problem descend to zero") {
  // Single frame, symmetric points 1/16 m above the plane: the rotational
  // gradient cancels exactly and each step of 1/1024 m is exact.
  const double h = 1.0 / 16.0, lr = 1.0 / 1024.0;
  const std::vector<Vec3> pts{{0.5, h, 0.25}, {-0.5, h, -0.25}, {0.5, h, -0.25}, {-0.5, h, 0.25}};
  std::vector<Pose> poses(1);
  const AnchoredCloud floor = testing::anchored(pts, poses);
  FloorModel model;
  model.plane = Plane::from_point_normal(Vec3::Zero(), Vec3::UnitY());
  BAConfig cfg;
  cfg.lambda_floor = 1.0;
  cfg.momentum = 0.0;
  BAProblem prob;
  prob.num_frames = 1;
  prob.floor = &floor;
  prob.floor_model = &model;
  double prev = total_loss(prob, poses, cfg).total;
  CHECK(prev == h);
  int steps = 0;
  while (prev >= 1e-8 && steps < 1000) {
    const TotalLoss t = total_loss(prob, poses, cfg);
    poses[0] = poses[0].retract(-lr * t.grad[0]);
    const double now = total_loss(prob, poses, cfg).total;
    REQUIRE(now < prev);
    prev = now;
    ++steps;
  }
  CHECK(prev < 1e-8);
  CHECK(steps == 64);
}

TEST_CASE("noise-free poses are a fixed point") {
  const SyntheticData data = generate_scene(three_room_floorplan(), three_room_spec(12, 2));
  const auto& gt = data.scene.trajectory;
  const MatchSet matches = landmark_match_set(data.scene);
  const Floorplan3D fp3d = build_floorplan3d(data.scene.floorplan, 0.0, 2.6, 200.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Vec3> floor_pts, wall_pts;
  for (int i = 0; i < 600; ++i) floor_pts.emplace_back(8 * u(rng), 0.0, 6 * u(rng));
  for (std::size_t i = 0; i < fp3d.points.size(); i += 5) wall_pts.push_back(fp3d.points[i]);
  const AnchoredCloud floor = testing::anchored(floor_pts, gt);
  AnchoredCloud walls = testing::anchored(wall_pts, gt);
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const Plane& pl = fp3d.wall_planes[fp3d.point_segment[i * 5]];
    walls.local_normals.push_back(gt[walls.frame(i)].rotation.conjugate() * pl.normal);
  }
  walls.cloud.normals.resize(walls.size());
  for (std::size_t i = 0; i < walls.size(); ++i)
    walls.cloud.normals[i] = gt[walls.frame(i)].rotation * walls.local_normals[i];

  BAConfig cfg;
  cfg.max_steps = 300;
  cfg.lr_switch_step = 150;
  const OptimizeResult r = optimize_poses(gt, matches, floor, walls, fp3d, cfg);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    CHECK((r.poses[i].translation - gt[i].translation).norm() < 1e-4);
    CHECK(r.poses[i].rotation.angularDistance(gt[i].rotation) * 180.0 / std::numbers::pi < 0.01);
  }
}

TEST_CASE("frames without residuals keep their poses") {
  MatchSet m;
  m.pairs.push_back({0, {0, 0, 1}, 1, {0.1, 0, 1}});
  std::mt19937_64 rng(7);
  const std::vector<Pose> init{Pose::identity(), Pose::identity(), testing::random_pose(rng)};
  BAConfig cfg;
  cfg.lambda_floor = 0.0;
  cfg.lambda_walls = 0.0;
  cfg.max_steps = 50;
  const OptimizeResult r =
      optimize_poses(init, m, AnchoredCloud{}, AnchoredCloud{}, Floorplan3D{}, cfg);
  REQUIRE(r.frames_without_gradient == std::vector<std::uint32_t>{2});
  CHECK(r.poses[2].translation == init[2].translation);
  CHECK(r.poses[2].rotation.coeffs() == init[2].rotation.coeffs());
  CHECK(geometric_loss(m, r.poses).value < geometric_loss(m, init).value);
}

TEST_CASE("drifted poses are pulled back toward the truth") {
  const SyntheticData data = generate_scene(three_room_floorplan(), three_room_spec(30, 4));
  const auto& gt = data.scene.trajectory;
  const std::vector<Pose> drifted = perturb_poses(gt, {0.1, 0.003}, 5);
  const MatchSet matches = landmark_match_set(data.scene);
  SemanticClouds clouds = build_semantic_clouds(data.frames, drifted, 8);
  attach_normals(clouds.walls, drifted);
  const Floorplan3D fp3d = build_floorplan3d(data.scene.floorplan, 0.0, 2.6, 300.0);
  BAConfig cfg;
  cfg.max_steps = 4000;
  cfg.lr_switch_step = 3000;
  const OptimizeResult r =
      optimize_poses(drifted, matches, clouds.floor, clouds.walls, fp3d, cfg);
  const double before = ate(drifted, gt), after = ate(r.poses, gt);
  CAPTURE(before);
  CAPTURE(after);
  CHECK(after < 0.5 * before);
}

}  // TEST_SUITE

#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "fpba/geometry.hpp"
#include "support.hpp"

using namespace fpba;

namespace {
const CameraIntrinsics kIntr{500.0, 500.0, 320.0, 240.0, 0.001};
}

TEST_SUITE("geometry") {

TEST_CASE("backprojection of a pixel") {
  auto p = backproject_pixel(kIntr.cx, kIntr.cy, 1000, kIntr);
  REQUIRE(p);
  CHECK((*p - Vec3(0, 0, 1)).norm() < 1e-12);

  p = backproject_pixel(kIntr.cx + kIntr.fx, kIntr.cy, 1000, kIntr);
  REQUIRE(p);
  CHECK((*p - Vec3(1, 0, 1)).norm() < 1e-12);

  CHECK_FALSE(backproject_pixel(kIntr.cx, kIntr.cy, 0, kIntr));
}

TEST_CASE("backproject then project returns the pixel") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 640), v(0, 480);
  std::uniform_int_distribution<int> d(1, 65535);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double pu = u(rng), pv = v(rng);
    const auto p = backproject_pixel(pu, pv, static_cast<std::uint16_t>(d(rng)), kIntr);
    const Vec2 uv = project_point(*p, kIntr);
    worst = std::max(worst, (uv - Vec2(pu, pv)).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("transform_point") {
  CHECK((transform_point(Pose::identity(), {1, 2, 3}) - Vec3(1, 2, 3)).norm() == 0.0);
  const Pose shift = Pose::from_rt(Mat3::Identity(), {0, 0, 5});
  CHECK((transform_point(shift, {1, 2, 3}) - Vec3(1, 2, 8)).norm() < 1e-15);
  const Pose yaw = Pose::from_rt(yaw_rotation(std::numbers::pi / 2), Vec3::Zero());
  CHECK((transform_point(yaw, {1, 0, 0}) - Vec3(0, 0, -1)).norm() < 1e-12);
}

TEST_CASE("rigid transforms keep pairwise distances") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0, 3);
  std::vector<Vec3> pts(50);
  for (auto& p : pts) p = Vec3(g(rng), g(rng), g(rng));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose pose = testing::random_pose(rng, 10.0, 2.0);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const double a = (pts[i] - pts[j]).norm();
        const double b = (transform_point(pose, pts[i]) - transform_point(pose, pts[j])).norm();
        worst = std::max(worst, std::abs(a - b));
      }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("normals of a plane") {
  PointCloud cloud;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) cloud.points.emplace_back(u(rng), 0.0, u(rng));
  const PointCloud out = estimate_normals(cloud);
  REQUIRE(out.normals.size() == 200);
  double worst = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    REQUIRE(out.normal_ok(i));
    worst = std::max(worst, 1.0 - std::abs(out.normals[i].y()));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("collinear points get invalid normals") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const PointCloud out = estimate_normals(cloud, 2);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK_FALSE(out.normal_ok(i));
}

TEST_CASE("normals of a noisy plane stay close to the true normal") {
  PointCloud cloud;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> n(0, 0.001);
  for (int i = 0; i < 2000; ++i) cloud.points.emplace_back(u(rng), n(rng), u(rng));
  const PointCloud out = estimate_normals(cloud);
  double sum = 0.0;
  for (const auto& nrm : out.normals) sum += std::acos(std::min(1.0, std::abs(nrm.y())));
  CHECK(sum / out.size() * 180.0 / std::numbers::pi < 2.0);
}

TEST_CASE("normals ignore a global translation") {
  PointCloud cloud;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 300; ++i) cloud.points.emplace_back(u(rng), 0.1 * u(rng) * u(rng), u(rng));
  PointCloud moved = cloud;
  for (auto& p : moved.points) p += Vec3(0.3, -0.2, 0.5);
  const PointCloud a = estimate_normals(cloud);
  const PointCloud b = estimate_normals(moved);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, 1.0 - std::abs(a.normals[i].dot(b.normals[i])));
  CHECK(worst < 1e-9);
}

TEST_CASE("plane fit") {
  const std::vector<Vec3> square{{0, 2, 0}, {1, 2, 0}, {1, 2, 1}, {0, 2, 1}};
  const Plane p = fit_plane(square);
  CHECK(std::abs(std::abs(p.normal.y()) - 1.0) < 1e-12);
  CHECK(std::abs(p.offset + 2.0 * p.normal.y()) < 1e-12);

  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(fit_plane(two), Error);
}

TEST_CASE("plane fit with an outlier matches an eigen-decomposition oracle") {
  std::vector<Vec3> pts{{0, 2, 0}, {1, 2, 0}, {1, 2, 1}, {0, 2, 1}, {0.5, 2.1, 0.5}};
  Vec3 c = Vec3::Zero();
  for (const auto& q : pts) c += q;
  c /= pts.size();
  Mat3 s = Mat3::Zero();
  for (const auto& q : pts) s += (q - c) * (q - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(s);
  const Vec3 n_ref = es.eigenvectors().col(0);

  const Plane p = fit_plane(pts);
  CHECK(std::abs(std::abs(p.normal.dot(n_ref)) - 1.0) < 1e-12);
  CHECK(std::abs(p.signed_distance(c)) < 1e-12);
  CHECK(std::abs(c.y() - 2.02) < 1e-12);
  CHECK(std::abs(-p.offset / p.normal.y() - 2.02) < 0.03);
}

TEST_CASE("point to plane distance") {
  const Plane y2 = Plane::from_point_normal({0, 2, 0}, Vec3::UnitY());
  CHECK(point_plane_distance({4, 2, -1}, y2) == doctest::Approx(0.0));
  CHECK(point_plane_distance({0, 3, 0}, y2) == doctest::Approx(1.0));
  const Plane diag{Vec3(1, 1, 1).normalized(), 0.0};
  CHECK(point_plane_distance({1, 1, 1}, diag) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("plane fit distances survive rigid motion") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0, 1);
  std::vector<Vec3> pts(100);
  for (auto& p : pts) p = Vec3(g(rng), 0.05 * g(rng), g(rng));
  const Pose pose = testing::random_pose(rng, 5.0, 1.0);
  std::vector<Vec3> moved;
  for (const auto& p : pts) moved.push_back(pose * p);
  const Plane a = fit_plane(pts), b = fit_plane(moved);
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    worst = std::max(worst, std::abs(point_plane_distance(pts[i], a) -
                                     point_plane_distance(moved[i], b)));
  CHECK(worst < 1e-9);
}

}  // TEST_SUITE

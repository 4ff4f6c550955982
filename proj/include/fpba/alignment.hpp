#pragma once

#include <array>
#include <optional>
#include <vector>

#include "fpba/floorplan.hpp"
#include "fpba/geometry.hpp"
#include "fpba/io.hpp"

namespace fpba {

/// Maps floorplan coordinates into scan coordinates: (x, z) is rotated by
/// `yaw` about the y-axis, scaled, then shifted; y is only shifted.
struct SimilarityTransform {
  double yaw = 0.0;
  double scale = 1.0;
  Vec3 shift = Vec3::Zero();

  Vec3 apply(const Vec3& p) const;
  Vec2 apply_xz(const Vec2& uv) const;
  SimilarityTransform inverse() const;
  Floorplan2D apply(const Floorplan2D& fp) const;
};

/// Sample directions of an icosphere refined `level` times (level 4 gives
/// roughly 4-5 degree spacing).
std::vector<Vec3> icosphere_vertices(int level);

struct GravityEstimate {
  Vec3 gravity = -Vec3::UnitY();
  bool confident = true;
  std::size_t top_bin_count = 0;
  std::size_t second_bin_count = 0;
};

/// Mode of the normal directions on a ~5 degree sphere binning, refined by
/// averaging the normals around the winning bin. With a camera "down" prior
/// the sign follows it; otherwise the result points toward the side where the
/// mode points sit (the floor).
GravityEstimate estimate_gravity(const PointCloud& cloud,
                                 std::optional<Vec3> down_prior = std::nullopt);

struct BoundaryOptions {
  double histogram_bin = 0.02;
  double floor_margin = 0.15;
  double cell_size = 0.1;
  double wall_extent_fraction = 0.4;  // of the remaining scan height
  double cell_percentile = 25.0;
};

struct BoundaryScan {
  PointCloud cloud;
  std::vector<std::size_t> kept;  // indices into the input cloud
  double floor_y = 0.0;
};

BoundaryScan build_boundary_scan(const PointCloud& cloud, const BoundaryOptions& opts = {});

struct YawCandidate {
  SimilarityTransform transform;
  double cost = 0.0;  // mean boundary-to-floorplan nearest-point distance
};

struct YawEstimate {
  double yaw = 0.0;
  std::array<YawCandidate, 4> candidates{};
  std::size_t best = 0;
  double scan_directions[2] = {0.0, 0.0};
  double floorplan_direction = 0.0;
};

YawEstimate estimate_yaw(const PointCloud& boundary, const Floorplan3D& fp3d);

SimilarityTransform estimate_scale_shift(const PointCloud& boundary, const Floorplan3D& fp3d,
                                         double yaw);

struct AlignOptions {
  BoundaryOptions boundary;
  double floorplan_density = kDefaultFloorplanDensity;
  std::uint64_t seed = 0;
  int normal_k = 16;
  bool assume_leveled = false;  // skip gravity estimation, keep y as up
};

struct AlignmentResult {
  GravityEstimate gravity;
  Pose leveling;  // rotation taking the scan into the gravity-aligned frame
  double y_min = 0.0;
  double y_max = 0.0;
  double floor_y = 0.0;
  std::size_t boundary_points = 0;
  YawEstimate yaw;
  SimilarityTransform transform;
  double residual = 0.0;  // mean boundary-to-aligned-floorplan distance
};

/// Gravity leveling, boundary extraction, yaw selection and scale/shift
/// estimation. `scan` needs normals (estimated here when absent).
AlignmentResult align(const PointCloud& scan, const Floorplan2D& fp,
                      const AlignOptions& opts = {},
                      std::optional<Vec3> down_prior = std::nullopt);

}  // namespace fpba

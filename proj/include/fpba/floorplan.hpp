#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fpba/geometry.hpp"
#include "fpba/io.hpp"
#include "fpba/kdtree.hpp"

namespace fpba {

/// Floorplan walls extruded to [y_min, y_max], sampled as points and kept as
/// analytic vertical planes. Floorplan (u, v) maps to world (x, z).
struct Floorplan3D {
  std::vector<std::array<Vec3, 4>> wall_rects;
  std::vector<Plane> wall_planes;
  std::vector<Vec3> points;
  std::vector<std::uint32_t> point_segment;
  double y_min = 0.0;
  double y_max = 0.0;
  KdTree tree;

  bool empty() const { return points.empty(); }
};

inline constexpr double kDefaultFloorplanDensity = 500.0;  // points per m^2

Floorplan3D build_floorplan3d(const Floorplan2D& fp, double y_min, double y_max,
                              double density = kDefaultFloorplanDensity,
                              std::uint64_t seed = 0);

/// Vertical plane containing a segment, normal (dv, 0, -du) / length.
Plane segment_plane(const FloorplanSegment& s);

struct FloorplanHit {
  Vec3 point = Vec3::Zero();
  std::size_t point_index = 0;
  std::size_t segment = 0;
  double distance = 0.0;
};

FloorplanHit nearest_floorplan_point(const Vec3& p, const Floorplan3D& fp3d);

double point_segment_distance(const Vec2& p, const FloorplanSegment& s);

/// Exact horizontal distance from (x, z) to the closest floorplan segment.
double nearest_segment_distance(const Vec2& p_xz, const Floorplan2D& fp);

/// Analytic distance from a 3D point to the wall rectangle of segment `s`.
double point_rect_distance(const Vec3& p, const FloorplanSegment& s, double y_min, double y_max);

}  // namespace fpba

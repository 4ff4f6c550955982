#include "fpba/floorplan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace fpba {

Plane segment_plane(const FloorplanSegment& s) {
  const Vec2 d = (s.b() - s.a()) / s.length();
  return Plane::from_point_normal(Vec3(s.u1, 0.0, s.v1), Vec3(d.y(), 0.0, -d.x()));
}

Floorplan3D build_floorplan3d(const Floorplan2D& fp, double y_min, double y_max, double density,
                              std::uint64_t seed) {
  if (fp.segments.empty()) throw Error(ErrorCode::kEmptyFloorplan, "floorplan has no segments");
  if (!(y_min < y_max)) throw Error(ErrorCode::kInvalidArgument, "3D floorplan needs y_min < y_max");
  if (!(density > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sampling density must be positive");

  Floorplan3D out;
  out.y_min = y_min;
  out.y_max = y_max;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double height = y_max - y_min;
  for (std::size_t si = 0; si < fp.segments.size(); ++si) {
    const auto& s = fp.segments[si];
    out.wall_rects.push_back({Vec3(s.u1, y_min, s.v1), Vec3(s.u1, y_max, s.v1),
                              Vec3(s.u2, y_min, s.v2), Vec3(s.u2, y_max, s.v2)});
    out.wall_planes.push_back(segment_plane(s));
    const auto count = static_cast<std::size_t>(std::ceil(s.length() * height * density - 1e-9));
    for (std::size_t k = 0; k < count; ++k) {
      const double t = unit(rng);
      const double y = y_min + height * unit(rng);
      out.points.emplace_back(s.u1 + t * (s.u2 - s.u1), y, s.v1 + t * (s.v2 - s.v1));
      out.point_segment.push_back(static_cast<std::uint32_t>(si));
    }
  }
  out.tree = KdTree(out.points);
  return out;
}

FloorplanHit nearest_floorplan_point(const Vec3& p, const Floorplan3D& fp3d) {
  const auto nb = fp3d.tree.nearest(p);
  FloorplanHit hit;
  hit.point_index = nb.index;
  hit.point = fp3d.points[nb.index];
  hit.segment = fp3d.point_segment[nb.index];
  hit.distance = std::sqrt(nb.sq_dist);
  return hit;
}

double point_segment_distance(const Vec2& p, const FloorplanSegment& s) {
  const Vec2 a = s.a();
  const Vec2 ab = s.b() - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double nearest_segment_distance(const Vec2& p_xz, const Floorplan2D& fp) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : fp.segments) best = std::min(best, point_segment_distance(p_xz, s));
  return best;
}

double point_rect_distance(const Vec3& p, const FloorplanSegment& s, double y_min, double y_max) {
  const Vec2 a = s.a();
  const Vec2 ab = s.b() - a;
  const Vec2 pxz(p.x(), p.z());
  const double t = std::clamp((pxz - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  const Vec2 foot = a + t * ab;
  const double y = std::clamp(p.y(), y_min, y_max);
  return (p - Vec3(foot.x(), y, foot.y())).norm();
}

}  // namespace fpba

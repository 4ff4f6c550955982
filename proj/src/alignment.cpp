#include "fpba/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>

#include "fpba/kdtree.hpp"

namespace fpba {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// Angle of a horizontal direction such that a yaw rotation adds to it.
double heading(const Vec3& v) { return std::atan2(-v.z(), v.x()); }

double fold_half_turn(double a) {
  a = std::fmod(a, kPi);
  if (a < 0.0) a += kPi;
  return a;
}

double half_turn_gap(double a, double b) {
  const double d = std::abs(fold_half_turn(a) - fold_half_turn(b));
  return std::min(d, kPi - d);
}

struct DirectionPeak {
  double angle = 0.0;
  double weight = 0.0;
};

// Dominant undirected horizontal direction on 1-degree bins, refined with a
// doubled-angle mean over +-3 degrees around the peak.
DirectionPeak dominant_direction(const std::vector<double>& angles,
                                 const std::vector<double>& weights, double window_center,
                                 double window_half_width) {
  constexpr int kBins = 180;
  std::array<double, kBins> hist{};
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const int b = std::min(kBins - 1, static_cast<int>(fold_half_turn(angles[i]) / kPi * kBins));
    hist[b] += weights[i];
  }
  int best = -1;
  double best_val = -1.0;
  for (int b = 0; b < kBins; ++b) {
    const double center = (b + 0.5) * kPi / kBins;
    if (window_half_width < kPi && half_turn_gap(center, window_center) > window_half_width) {
      continue;
    }
    double s = 0.0;
    for (int k = -2; k <= 2; ++k) s += hist[(b + k + kBins) % kBins];
    if (s > best_val) {
      best_val = s;
      best = b;
    }
  }
  DirectionPeak peak;
  if (best < 0) return peak;
  const double center = (best + 0.5) * kPi / kBins;
  double c = 0.0;
  double s = 0.0;
  const double refine_window = 3.0 * kPi / 180.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (half_turn_gap(angles[i], center) > refine_window) continue;
    c += weights[i] * std::cos(2.0 * angles[i]);
    s += weights[i] * std::sin(2.0 * angles[i]);
    peak.weight += weights[i];
  }
  peak.angle = peak.weight > 0.0 ? fold_half_turn(0.5 * std::atan2(s, c)) : center;
  return peak;
}

// Range trimmed by a small fraction at each end.
std::pair<double, double> trimmed_range(std::vector<double> v, double trim) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  const auto lo = static_cast<std::size_t>(std::floor(trim * static_cast<double>(n - 1)));
  const auto hi = static_cast<std::size_t>(std::ceil((1.0 - trim) * static_cast<double>(n - 1)));
  return {v[lo], v[hi]};
}

constexpr double kRangeTrim = 0.001;

double mean_nearest_distance(const PointCloud& boundary, const KdTree& tree) {
  const std::size_t n = boundary.size();
  const std::size_t step = std::max<std::size_t>(1, n / 5000);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; i += step) {
    sum += std::sqrt(tree.nearest(boundary.points[i]).sq_dist);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

// ------------------------------------------------------------ transform

Vec2 SimilarityTransform::apply_xz(const Vec2& uv) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {scale * (c * uv.x() + s * uv.y()) + shift.x(),
          scale * (-s * uv.x() + c * uv.y()) + shift.z()};
}

Vec3 SimilarityTransform::apply(const Vec3& p) const {
  const Vec2 xz = apply_xz(Vec2(p.x(), p.z()));
  return {xz.x(), p.y() + shift.y(), xz.y()};
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.yaw = -yaw;
  inv.scale = 1.0 / scale;
  const double c = std::cos(-yaw);
  const double s = std::sin(-yaw);
  const Vec2 t(shift.x(), shift.z());
  const Vec2 rt(c * t.x() + s * t.y(), -s * t.x() + c * t.y());
  inv.shift = Vec3(-rt.x() / scale, -shift.y(), -rt.y() / scale);
  return inv;
}

Floorplan2D SimilarityTransform::apply(const Floorplan2D& fp) const {
  Floorplan2D out = fp;
  for (auto& s : out.segments) {
    const Vec2 a = apply_xz(s.a());
    const Vec2 b = apply_xz(s.b());
    s = {a.x(), a.y(), b.x(), b.y()};
  }
  return out;
}

// ------------------------------------------------------------- gravity

std::vector<Vec3> icosphere_vertices(int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = midpoint(f[0], f[1]);
      const int b = midpoint(f[1], f[2]);
      const int c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  return v;
}

GravityEstimate estimate_gravity(const PointCloud& cloud, std::optional<Vec3> down_prior) {
  static const std::vector<Vec3> bins = icosphere_vertices(4);
  static const KdTree bin_tree(bins);

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.normal_ok(i)) valid.push_back(i);
  }
  if (valid.size() < 100) {
    throw Error(ErrorCode::kInvalidArgument, "gravity estimation needs at least 100 valid normals");
  }
  std::vector<std::size_t> counts(bins.size(), 0);
  for (std::size_t i : valid) ++counts[bin_tree.nearest(cloud.normals[i]).index];

  const auto top = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  // Bins next to the winner share its mode; rivals must be well separated.
  const double separation = std::cos(15.0 * kPi / 180.0);
  std::size_t second = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].dot(bins[top]) < separation) second = std::max(second, counts[b]);
  }

  GravityEstimate est;
  est.top_bin_count = counts[top];
  est.second_bin_count = second;
  est.confident = counts[top] >= 2 * second;

  const double refine = std::cos(10.0 * kPi / 180.0);
  Vec3 mode = Vec3::Zero();
  double mode_height = 0.0;
  std::size_t mode_count = 0;
  for (std::size_t i : valid) {
    if (cloud.normals[i].dot(bins[top]) >= refine) {
      mode += cloud.normals[i];
      ++mode_count;
    }
  }
  mode.normalize();
  double all_height = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) all_height += cloud.points[i].dot(mode);
  all_height /= static_cast<double>(cloud.size());
  for (std::size_t i : valid) {
    if (cloud.normals[i].dot(bins[top]) >= refine) mode_height += cloud.points[i].dot(mode);
  }
  mode_height /= static_cast<double>(mode_count);

  if (down_prior) {
    est.gravity = mode.dot(*down_prior) >= 0.0 ? mode : Vec3(-mode);
  } else {
    // Mode points below the bulk are floor points facing up.
    est.gravity = mode_height <= all_height ? Vec3(-mode) : mode;
  }
  return est;
}

// ------------------------------------------------------------- boundary

BoundaryScan build_boundary_scan(const PointCloud& cloud, const BoundaryOptions& opts) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyInput, "boundary scan of an empty cloud");

  double y_lo = cloud.points.front().y();
  double y_hi = y_lo;
  for (const auto& p : cloud.points) {
    y_lo = std::min(y_lo, p.y());
    y_hi = std::max(y_hi, p.y());
  }
  const auto nbins = static_cast<std::size_t>(std::floor((y_hi - y_lo) / opts.histogram_bin)) + 1;
  std::vector<std::size_t> hist(nbins, 0);
  for (const auto& p : cloud.points) {
    ++hist[std::min(nbins - 1, static_cast<std::size_t>((p.y() - y_lo) / opts.histogram_bin))];
  }
  const double y_mid = 0.5 * (y_lo + y_hi);
  std::size_t peak = 0;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (y_lo + (b + 0.5) * opts.histogram_bin > y_mid && b > 0) break;
    if (hist[b] > hist[peak]) peak = b;
  }
  std::vector<std::size_t> occupied;
  for (auto h : hist) {
    if (h > 0) occupied.push_back(h);
  }
  std::nth_element(occupied.begin(), occupied.begin() + occupied.size() / 2, occupied.end());
  const std::size_t median = occupied[occupied.size() / 2];
  if (nbins < 3 || hist[peak] < 3 * median) {
    throw Error(ErrorCode::kNoFloorPeak, "no floor peak in the height histogram");
  }

  BoundaryScan out;
  out.floor_y = y_lo + (static_cast<double>(peak) + 0.5) * opts.histogram_bin;
  const double cut = out.floor_y + opts.floor_margin;

  struct Cell {
    std::size_t count = 0;
    double y_min = 1e300;
    double y_max = -1e300;
  };
  auto cell_key = [&](const Vec3& p) {
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() / opts.cell_size));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z() / opts.cell_size));
    return (static_cast<std::uint64_t>(ix) << 32) ^ static_cast<std::uint64_t>(iz & 0xFFFFFFFF);
  };
  std::unordered_map<std::uint64_t, Cell> cells;
  std::vector<std::size_t> above;
  double top = -1e300;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (p.y() < cut) continue;
    above.push_back(i);
    top = std::max(top, p.y());
    Cell& c = cells[cell_key(p)];
    ++c.count;
    c.y_min = std::min(c.y_min, p.y());
    c.y_max = std::max(c.y_max, p.y());
  }
  if (above.empty()) throw Error(ErrorCode::kEmptyInput, "nothing left above the floor");

  const double min_extent = opts.wall_extent_fraction * (top - cut);
  std::vector<std::size_t> wall_counts;
  for (const auto& [key, c] : cells) {
    if (c.y_max - c.y_min >= min_extent) wall_counts.push_back(c.count);
  }
  if (wall_counts.empty()) throw Error(ErrorCode::kEmptyInput, "no wall structure in the scan");
  std::sort(wall_counts.begin(), wall_counts.end());
  const auto rank = static_cast<std::size_t>(
      std::floor(opts.cell_percentile / 100.0 * static_cast<double>(wall_counts.size() - 1)));
  const std::size_t threshold = wall_counts[rank];

  for (std::size_t i : above) {
    const Cell& c = cells.at(cell_key(cloud.points[i]));
    if (c.y_max - c.y_min >= min_extent && c.count >= threshold) out.kept.push_back(i);
  }
  out.cloud = cloud.select(out.kept);
  return out;
}

// ------------------------------------------------------------ yaw, scale

SimilarityTransform estimate_scale_shift(const PointCloud& boundary, const Floorplan3D& fp3d,
                                         double yaw) {
  if (boundary.empty() || fp3d.empty()) {
    throw Error(ErrorCode::kEmptyInput, "scale estimation needs boundary and floorplan points");
  }
  SimilarityTransform rot;
  rot.yaw = yaw;
  std::vector<double> fx, fz, sx, sz;
  fx.reserve(fp3d.points.size());
  fz.reserve(fp3d.points.size());
  for (const auto& p : fp3d.points) {
    const Vec3 q = rot.apply(p);
    fx.push_back(q.x());
    fz.push_back(q.z());
  }
  for (const auto& p : boundary.points) {
    sx.push_back(p.x());
    sz.push_back(p.z());
  }
  const auto [fx0, fx1] = trimmed_range(std::move(fx), kRangeTrim);
  const auto [fz0, fz1] = trimmed_range(std::move(fz), kRangeTrim);
  const auto [sx0, sx1] = trimmed_range(std::move(sx), kRangeTrim);
  const auto [sz0, sz1] = trimmed_range(std::move(sz), kRangeTrim);
  constexpr double kMinExtent = 1e-6;
  if (fx1 - fx0 < kMinExtent || fz1 - fz0 < kMinExtent || sx1 - sx0 < kMinExtent ||
      sz1 - sz0 < kMinExtent) {
    throw Error(ErrorCode::kDegenerate, "zero horizontal extent in scale estimation");
  }
  SimilarityTransform out;
  out.yaw = yaw;
  out.scale = 0.5 * ((sx1 - sx0) / (fx1 - fx0) + (sz1 - sz0) / (fz1 - fz0));
  const Vec2 scan_center(0.5 * (sx0 + sx1), 0.5 * (sz0 + sz1));
  const Vec2 fp_center(0.5 * (fx0 + fx1), 0.5 * (fz0 + fz1));
  const Vec2 shift = scan_center - out.scale * fp_center;
  out.shift = Vec3(shift.x(), 0.0, shift.y());
  return out;
}

YawEstimate estimate_yaw(const PointCloud& boundary, const Floorplan3D& fp3d) {
  if (boundary.empty() || fp3d.empty()) {
    throw Error(ErrorCode::kEmptyInput, "yaw estimation needs boundary and floorplan points");
  }
  std::vector<double> angles, weights;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    if (!boundary.normal_ok(i)) continue;
    const Vec3& n = boundary.normals[i];
    if (std::abs(n.y()) > 0.5) continue;
    angles.push_back(heading(n));
    weights.push_back(1.0);
  }
  const DirectionPeak first = dominant_direction(angles, weights, 0.0, kPi);
  const DirectionPeak second =
      dominant_direction(angles, weights, first.angle + 0.5 * kPi, 10.0 * kPi / 180.0);
  if (first.weight < 10.0 || second.weight < 10.0 || second.weight < 0.1 * first.weight) {
    throw Error(ErrorCode::kInsufficientDirections,
                "boundary scan lacks two orthogonal wall directions");
  }

  std::vector<double> fp_angles, fp_weights;
  for (std::size_t s = 0; s < fp3d.wall_planes.size(); ++s) {
    fp_angles.push_back(heading(fp3d.wall_planes[s].normal));
    fp_weights.push_back((fp3d.wall_rects[s][2] - fp3d.wall_rects[s][0]).norm());
  }
  const DirectionPeak fp_dir = dominant_direction(fp_angles, fp_weights, 0.0, kPi);

  YawEstimate est;
  est.scan_directions[0] = first.angle;
  est.scan_directions[1] = second.angle;
  est.floorplan_direction = fp_dir.angle;
  const std::array<double, 4> targets = {first.angle, first.angle + kPi, second.angle,
                                         second.angle + kPi};
  for (std::size_t k = 0; k < 4; ++k) {
    const double yaw = wrap_angle(targets[k] - fp_dir.angle);
    YawCandidate cand;
    cand.transform = estimate_scale_shift(boundary, fp3d, yaw);
    std::vector<Vec3> moved;
    moved.reserve(fp3d.points.size());
    for (const auto& p : fp3d.points) moved.push_back(cand.transform.apply(p));
    cand.cost = mean_nearest_distance(boundary, KdTree(moved));
    est.candidates[k] = cand;
    if (cand.cost < est.candidates[est.best].cost) est.best = k;
  }
  est.yaw = est.candidates[est.best].transform.yaw;
  return est;
}

// --------------------------------------------------------------- align

AlignmentResult align(const PointCloud& scan, const Floorplan2D& fp, const AlignOptions& opts,
                      std::optional<Vec3> down_prior) {
  if (scan.empty()) throw Error(ErrorCode::kEmptyInput, "cannot align an empty scan");
  PointCloud work = scan.has_normals() ? scan : estimate_normals(scan, opts.normal_k);

  AlignmentResult res;
  if (!opts.assume_leveled) {
    res.gravity = estimate_gravity(work, down_prior);
    res.leveling.rotation =
        Eigen::Quaterniond::FromTwoVectors(res.gravity.gravity, -Vec3::UnitY()).normalized();
    for (std::size_t i = 0; i < work.size(); ++i) {
      work.points[i] = res.leveling.rotation * work.points[i];
      if (work.has_normals()) work.normals[i] = res.leveling.rotation * work.normals[i];
    }
  }
  res.y_min = work.points.front().y();
  res.y_max = res.y_min;
  for (const auto& p : work.points) {
    res.y_min = std::min(res.y_min, p.y());
    res.y_max = std::max(res.y_max, p.y());
  }
  const Floorplan3D fp3d =
      build_floorplan3d(fp, res.y_min, res.y_max, opts.floorplan_density, opts.seed);
  const BoundaryScan boundary = build_boundary_scan(work, opts.boundary);
  res.floor_y = boundary.floor_y;
  res.boundary_points = boundary.cloud.size();
  res.yaw = estimate_yaw(boundary.cloud, fp3d);
  res.transform = res.yaw.candidates[res.yaw.best].transform;
  res.residual = res.yaw.candidates[res.yaw.best].cost;
  return res;
}

}  // namespace fpba

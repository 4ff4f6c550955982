#include "fpba/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "fpba/floorplan.hpp"
#include "fpba/kdtree.hpp"

namespace fpba {

namespace {

std::vector<std::size_t> query_subset(std::size_t n, const NeighborhoodOptions& opts) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= opts.max_queries) return idx;
  std::mt19937_64 rng(opts.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(opts.max_queries);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Calls fn(covariance) for every query point with a usable neighborhood and
// averages the returned values; nullopt results are skipped.
template <typename Fn>
double neighborhood_average(const PointCloud& cloud, const NeighborhoodOptions& opts, Fn&& fn) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyInput, "metric on an empty cloud");
  const KdTree tree(cloud.points);
  std::vector<std::size_t> hood;
  std::vector<Vec3> pts;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t q : query_subset(cloud.size(), opts)) {
    tree.radius_search(cloud.points[q], opts.radius, hood);
    if (hood.size() < opts.min_neighbors) continue;
    pts.clear();
    for (std::size_t i : hood) pts.push_back(cloud.points[i] - cloud.points[q]);
    const auto v = fn(covariance_of(pts).covariance);
    if (!v) continue;
    sum += *v;
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::kNoValidNeighborhood, "no point has a valid neighborhood");
  }
  return sum / static_cast<double>(used);
}

double smallest_eigenvalue(const Mat3& cov) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov, Eigen::EigenvaluesOnly);
  return std::max(0.0, solver.eigenvalues()[0]);
}

}  // namespace

double mme(const PointCloud& cloud, const NeighborhoodOptions& opts) {
  const double k = 3.0 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return neighborhood_average(cloud, opts, [&](const Mat3& cov) -> std::optional<double> {
    const double det = cov.determinant();
    if (!(det > 0.0)) return std::nullopt;
    return 0.5 * (k + std::log(det));
  });
}

double mpv(const PointCloud& cloud, const NeighborhoodOptions& opts) {
  return neighborhood_average(cloud, opts, [](const Mat3& cov) -> std::optional<double> {
    return smallest_eigenvalue(cov);
  });
}

// --------------------------------------------------------------------- MOM

namespace {

struct FramePlane {
  Plane plane;
  std::vector<std::size_t> inliers;
};

std::vector<FramePlane> extract_planes(const std::vector<Vec3>& pts, const MomOptions& opts,
                                       std::uint64_t seed) {
  std::vector<FramePlane> planes;
  std::vector<std::size_t> remaining(pts.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (int p = 0; p < opts.max_planes && remaining.size() >= opts.min_inliers; ++p) {
    std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
    std::size_t best_count = 0;
    Plane best;
    for (int it = 0; it < opts.ransac_iterations; ++it) {
      const Vec3& a = pts[remaining[pick(rng)]];
      const Vec3& b = pts[remaining[pick(rng)]];
      const Vec3& c = pts[remaining[pick(rng)]];
      const Vec3 n = (b - a).cross(c - a);
      if (n.norm() < 1e-12) continue;
      const Plane cand = Plane::from_point_normal(a, n);
      std::size_t count = 0;
      for (std::size_t i : remaining) {
        if (std::abs(cand.signed_distance(pts[i])) < opts.inlier_threshold) ++count;
      }
      if (count > best_count) {
        best_count = count;
        best = cand;
      }
    }
    if (best_count < opts.min_inliers) break;
    // Refit on the consensus set, then collect final inliers.
    std::vector<Vec3> support;
    for (std::size_t i : remaining) {
      if (std::abs(best.signed_distance(pts[i])) < opts.inlier_threshold) support.push_back(pts[i]);
    }
    FramePlane fp;
    try {
      fp.plane = fit_plane(support);
    } catch (const Error&) {
      fp.plane = best;
    }
    std::vector<std::size_t> rest;
    for (std::size_t i : remaining) {
      if (std::abs(fp.plane.signed_distance(pts[i])) < opts.inlier_threshold) {
        fp.inliers.push_back(i);
      } else {
        rest.push_back(i);
      }
    }
    if (fp.inliers.size() < opts.min_inliers) break;
    remaining = std::move(rest);
    planes.push_back(std::move(fp));
  }
  return planes;
}

}  // namespace

MomResult mom(std::span<const Frame> frames, std::span<const Pose> poses, const MomOptions& opts) {
  if (frames.size() != poses.size()) {
    throw Error(ErrorCode::kCountMismatch, "MOM needs one pose per frame");
  }
  const double ortho = std::sin(opts.orthogonality_deg * std::numbers::pi / 180.0);
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  MomResult res;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const Frame& f = frames[fi];
    std::vector<Vec3> local;
    for (int r = 0; r < f.depth.height; r += opts.pixel_stride) {
      for (int c = 0; c < f.depth.width; c += opts.pixel_stride) {
        if (auto p = backproject_pixel(c, r, f.depth.at(r, c), f.intrinsics)) local.push_back(*p);
      }
    }
    const auto planes =
        extract_planes(local, opts, opts.neighborhood.seed ^ (0x9E3779B97F4A7C15ull * (fi + 1)));
    // Largest mutually orthogonal triple.
    std::size_t best_total = 0;
    std::array<std::size_t, 3> triple{};
    for (std::size_t a = 0; a < planes.size(); ++a) {
      for (std::size_t b = a + 1; b < planes.size(); ++b) {
        if (std::abs(planes[a].plane.normal.dot(planes[b].plane.normal)) > ortho) continue;
        for (std::size_t c = b + 1; c < planes.size(); ++c) {
          if (std::abs(planes[a].plane.normal.dot(planes[c].plane.normal)) > ortho) continue;
          if (std::abs(planes[b].plane.normal.dot(planes[c].plane.normal)) > ortho) continue;
          const std::size_t total =
              planes[a].inliers.size() + planes[b].inliers.size() + planes[c].inliers.size();
          if (total > best_total) {
            best_total = total;
            triple = {a, b, c};
          }
        }
      }
    }
    if (best_total == 0) {
      res.skipped_frames.push_back(f.index);
      continue;
    }
    ++res.frames_used;
    const Mat3 rot = poses[fi].rotation_matrix();
    for (std::size_t k : triple) {
      const Vec3 n = rot * planes[k].plane.normal;
      for (std::size_t i : planes[k].inliers) {
        // Points near an intersection line are ambiguous; leave them out.
        bool shared = false;
        for (std::size_t o : triple) {
          if (o != k && std::abs(planes[o].plane.signed_distance(local[i])) < opts.inlier_threshold)
            shared = true;
        }
        if (shared) continue;
        points.push_back(poses[fi] * local[i]);
        normals.push_back(n);
      }
    }
  }
  if (res.frames_used == 0) {
    throw Error(ErrorCode::kNoValidNeighborhood, "no frame shows three orthogonal planes");
  }
  res.points = points.size();

  const KdTree tree(points);
  const double parallel = std::cos(opts.parallel_deg * std::numbers::pi / 180.0);
  std::vector<std::size_t> hood;
  std::vector<Vec3> pts;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t q : query_subset(points.size(), opts.neighborhood)) {
    tree.radius_search(points[q], opts.neighborhood.radius, hood);
    pts.clear();
    for (std::size_t i : hood) {
      if (std::abs(normals[i].dot(normals[q])) >= parallel) pts.push_back(points[i] - points[q]);
    }
    if (pts.size() < opts.neighborhood.min_neighbors) continue;
    sum += smallest_eigenvalue(covariance_of(pts).covariance);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kNoValidNeighborhood, "MOM found no valid neighborhood");
  res.value = sum / static_cast<double>(used);
  return res;
}

// ------------------------------------------------------------ NND and NSD

double nnd(const PointCloud& recon, const PointCloud& reference) {
  if (recon.empty() || reference.empty()) {
    throw Error(ErrorCode::kEmptyInput, "NND needs non-empty clouds");
  }
  const KdTree tree(reference.points);
  double sum = 0.0;
  for (const auto& p : recon.points) sum += std::sqrt(tree.nearest(p).sq_dist);
  return sum / static_cast<double>(recon.size());
}

double nsd(const PointCloud& walls, const Floorplan2D& fp) {
  if (walls.empty()) throw Error(ErrorCode::kEmptyInput, "NSD needs a non-empty walls cloud");
  if (fp.segments.empty()) throw Error(ErrorCode::kEmptyFloorplan, "NSD needs floorplan segments");
  double sum = 0.0;
  for (const auto& p : walls.points) sum += nearest_segment_distance(Vec2(p.x(), p.z()), fp);
  return sum / static_cast<double>(walls.size());
}

double ate(std::span<const Pose> estimate, std::span<const Pose> ground_truth) {
  if (estimate.size() != ground_truth.size()) {
    throw Error(ErrorCode::kCountMismatch, "ATE needs trajectories of equal length");
  }
  if (estimate.empty()) throw Error(ErrorCode::kEmptyInput, "ATE of an empty trajectory");
  const auto n = static_cast<Eigen::Index>(estimate.size());
  Eigen::Matrix3Xd src(3, n);
  Eigen::Matrix3Xd dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = estimate[static_cast<std::size_t>(i)].translation;
    dst.col(i) = ground_truth[static_cast<std::size_t>(i)].translation;
  }
  const Eigen::Matrix4d t = n >= 3 ? Eigen::umeyama(src, dst, false)
                                   : Eigen::Matrix4d(Eigen::Matrix4d::Identity());
  const Eigen::Matrix3Xd aligned = (t.topLeftCorner<3, 3>() * src).colwise() + t.topRightCorner<3, 1>();
  return std::sqrt((aligned - dst).colwise().squaredNorm().sum() / static_cast<double>(n));
}

std::string MetricsReport::format() const {
  auto line = [](const char* key, const std::optional<double>& v) {
    return std::string(key) + ": " + (v ? format_double(*v) : std::string("absent")) + "\n";
  };
  std::string out;
  out += line("mme", mme);
  out += line("mpv", mpv);
  out += line("mom", mom);
  out += line("nnd", nnd);
  out += line("nsd", nsd);
  if (ate) out += line("ate", ate);
  out += "radius: " + format_double(radius) + "\n";
  out += "points: " + std::to_string(points) + "\n";
  out += "wall_points: " + std::to_string(wall_points) + "\n";
  out += "mom_frames_used: " + std::to_string(mom_frames_used) + "\n";
  out += "mom_frames_skipped: " + std::to_string(mom_frames_skipped) + "\n";
  for (const auto& w : warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace fpba

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpba/geometry.hpp"
#include "fpba/io.hpp"

namespace fpba {

struct NeighborhoodOptions {
  double radius = 0.1;
  std::size_t min_neighbors = 5;
  std::size_t max_queries = 20000;  // seeded subsample of query points
  std::uint64_t seed = 0;
};

/// Mean map entropy: average of 0.5 * ln((2 pi e)^3 det(cov)) over points
/// whose radius neighborhood has enough points and a non-singular covariance.
double mme(const PointCloud& cloud, const NeighborhoodOptions& opts = {});

/// Mean plane variance: average variance of neighbor distances to the local
/// total least-squares plane.
double mpv(const PointCloud& cloud, const NeighborhoodOptions& opts = {});

struct MomOptions {
  NeighborhoodOptions neighborhood;
  int pixel_stride = 2;
  double inlier_threshold = 0.01;
  int ransac_iterations = 200;
  int max_planes = 6;
  double orthogonality_deg = 5.0;
  double parallel_deg = 10.0;  // neighbor planes considered the same surface
  std::size_t min_inliers = 50;
};

struct MomResult {
  double value = 0.0;
  std::size_t frames_used = 0;
  std::vector<int> skipped_frames;  // Frame::index of frames without 3 planes
  std::size_t points = 0;
};

/// Mutually orthogonal metric: plane variance evaluated only on points of
/// three orthogonal planes extracted per depth map, neighborhoods drawn from
/// the plane points of all frames that share the query's orientation.
MomResult mom(std::span<const Frame> frames, std::span<const Pose> poses,
              const MomOptions& opts = {});

/// Mean distance from each reconstructed point to its nearest reference point.
double nnd(const PointCloud& recon, const PointCloud& reference);

/// Mean horizontal distance from wall points to the nearest floorplan segment.
double nsd(const PointCloud& walls, const Floorplan2D& fp);

/// Root mean square position error after the least-squares rigid alignment
/// of the estimated camera centers onto the ground truth.
double ate(std::span<const Pose> estimate, std::span<const Pose> ground_truth);

struct MetricsReport {
  std::optional<double> mme;
  std::optional<double> mpv;
  std::optional<double> mom;
  std::optional<double> nnd;
  std::optional<double> nsd;
  std::optional<double> ate;
  double radius = 0.1;
  std::size_t points = 0;
  std::size_t wall_points = 0;
  std::size_t mom_frames_used = 0;
  std::size_t mom_frames_skipped = 0;
  std::vector<std::string> warnings;

  std::string format() const;
};

}  // namespace fpba

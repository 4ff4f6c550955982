#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpba/floorplan.hpp"
#include "fpba/geometry.hpp"
#include "fpba/io.hpp"
#include "fpba/semantic_clouds.hpp"

namespace fpba {

enum class WallsStrategy { kNearestPoint, kIterativeNearestWall, kFixedNearestWall };

/// Accepts "np", "inw", "fnw" or the long snake_case names.
std::optional<WallsStrategy> parse_walls_strategy(std::string_view name);
std::string_view to_string(WallsStrategy s);

struct BAConfig {
  double lambda_floor = 10.0;
  double lambda_walls = 0.6;
  WallsStrategy walls_strategy = WallsStrategy::kFixedNearestWall;
  double lr_initial = 1e-3;
  double lr_reduced = 1e-4;
  int lr_switch_step = 20000;
  double convergence_eps = 1e-5;
  double momentum = 0.9;
  int realign_period = 5000;
  int max_steps = 40000;
  // Each term is averaged over its residual count before weighting.
  bool normalize_terms = true;

  void validate() const;
};

/// Defaults with the lighter walls weight used for hand-held captures.
BAConfig captured_scan_config();

struct MatchPair {
  std::uint32_t frame_a = 0;
  Vec3 point_a = Vec3::Zero();  // camera frame
  std::uint32_t frame_b = 0;
  Vec3 point_b = Vec3::Zero();
};

struct MatchSet {
  std::vector<MatchPair> pairs;
};

/// Depth at a sub-pixel location: inverse depth interpolated bilinearly when
/// the four neighbors agree within 5%, nearest valid pixel otherwise.
std::optional<double> sample_depth(const Frame& frame, double u, double v);

struct MatchSetBuild {
  MatchSet set;
  std::size_t dropped_no_depth = 0;
};

/// Backprojects keypoint matches (frame indices as in `Frame::index`) to
/// camera-frame points; match frames become positions in `frames`.
MatchSetBuild build_match_set(std::span<const Frame> frames,
                              std::span<const KeypointMatch> matches);

struct FloorModel {
  Plane plane;
};

FloorModel fit_floor_model(const AnchoredCloud& floor);

struct FixedWallAssignment {
  struct Entry {
    std::uint32_t point = 0;  // index into the walls cloud
    std::uint32_t plane = 0;  // index into Floorplan3D::wall_planes
  };
  std::vector<Entry> pairs;
  std::size_t scan_planes = 0;
  std::size_t matched_planes = 0;
  bool warning = false;
};

struct ClusterOptions {
  double angle_threshold_deg = 10.0;
  double offset_gap = 0.1;
  std::size_t min_points = 30;
};

/// Groups wall points by normal direction and horizontal offset, fits vertical
/// planes, and pairs each with a floorplan plane when the two are parallel and
/// mutually nearest. Uses the cloud's current world points and normals.
FixedWallAssignment cluster_walls(const PointCloud& walls, const Floorplan3D& fp3d,
                                  const ClusterOptions& opts = {});

/// Value and per-frame gradient ([dt; dtheta] in the retraction of
/// Pose::retract). `count` is the number of residuals summed.
struct LossEval {
  double value = 0.0;
  std::vector<Vec6> grad;
  std::size_t count = 0;
  bool warning = false;
};

LossEval geometric_loss(const MatchSet& matches, std::span<const Pose> poses);
LossEval floor_loss(const AnchoredCloud& floor, std::span<const Pose> poses,
                    const FloorModel& model);
LossEval walls_loss_nearest_point(const AnchoredCloud& walls, std::span<const Pose> poses,
                                  const Floorplan3D& fp3d);
LossEval walls_loss_iterative_nearest_wall(const AnchoredCloud& walls,
                                           std::span<const Pose> poses,
                                           const Floorplan3D& fp3d);
LossEval walls_loss_fixed_nearest_wall(const AnchoredCloud& walls, std::span<const Pose> poses,
                                       const FixedWallAssignment& assignment,
                                       const Floorplan3D& fp3d);

/// Everything the cost depends on besides the poses.
struct BAProblem {
  std::size_t num_frames = 0;
  const MatchSet* matches = nullptr;
  const AnchoredCloud* floor = nullptr;
  const FloorModel* floor_model = nullptr;
  const AnchoredCloud* walls = nullptr;
  const Floorplan3D* fp3d = nullptr;
  const FixedWallAssignment* assignment = nullptr;
};

struct TotalLoss {
  double total = 0.0;
  double geom = 0.0;
  double floor = 0.0;
  double walls = 0.0;
  std::vector<Vec6> grad;
};

TotalLoss total_loss(const BAProblem& problem, std::span<const Pose> poses,
                     const BAConfig& config);

struct LogRecord {
  int step = 0;
  double lr = 0.0;
  double total = 0.0;
  double geom = 0.0;
  double floor = 0.0;
  double walls = 0.0;
};

std::string format_log(std::span<const LogRecord> log);

struct OptimizeResult {
  std::vector<Pose> poses;
  std::vector<LogRecord> log;
  bool converged = false;
  int steps = 0;
  int realignments = 0;
  std::vector<std::uint32_t> frames_without_gradient;
};

/// Returns a re-aligned floorplan for the current poses, or nothing to keep
/// the present one.
using RealignFn = std::function<std::optional<Floorplan3D>(std::span<const Pose>)>;

/// Gradient descent with momentum on the pose retraction. The wall
/// assignment for the fixed strategy is built from `walls` (which needs
/// camera-frame normals) at the start and after each re-alignment.
OptimizeResult optimize_poses(std::span<const Pose> initial, const MatchSet& matches,
                              const AnchoredCloud& floor, const AnchoredCloud& walls,
                              Floorplan3D fp3d, const BAConfig& config,
                              const RealignFn& realign = {});

}  // namespace fpba

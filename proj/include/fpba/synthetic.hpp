#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fpba/ba.hpp"
#include "fpba/geometry.hpp"
#include "fpba/io.hpp"

namespace fpba {

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

namespace labels {
inline constexpr std::uint8_t kCeiling = 0;
inline constexpr std::uint8_t kFloor = 1;
inline constexpr std::uint8_t kWall = 2;
inline constexpr std::uint8_t kFurniture = 3;
}  // namespace labels

struct SceneSpec {
  double ceiling_height = 2.6;
  std::vector<Box> boxes;
  std::vector<Pose> trajectory;  // ground truth, camera-to-world
  int width = 160;
  int height = 120;
  CameraIntrinsics intrinsics{120.0, 120.0, 79.5, 59.5, 0.001};
  double depth_noise = 0.0;        // Gaussian sigma in meters
  std::size_t landmark_samples = 300;
  double wall_clearance = 0.05;    // minimum camera distance to any wall
  std::uint64_t seed = 0;
};

struct LandmarkView {
  std::uint32_t frame = 0;  // position in the trajectory
  double u = 0.0;
  double v = 0.0;
};

struct Landmark {
  Vec3 position = Vec3::Zero();
  std::vector<LandmarkView> views;  // ascending frame order, at least two
};

struct SyntheticScene {
  Floorplan2D floorplan;
  double floor_y = 0.0;
  double ceiling_height = 2.6;
  std::vector<Box> boxes;
  std::vector<Pose> trajectory;
  std::vector<Landmark> landmarks;
  CameraIntrinsics intrinsics;
  int width = 0;
  int height = 0;
};

struct SyntheticData {
  SyntheticScene scene;
  std::vector<Frame> frames;  // Frame::index = trajectory position, GT initial pose
};

/// Camera looking along `forward` with image-down as close to world -y as
/// possible.
Pose look_pose(const Vec3& eye, const Vec3& forward);

/// Walls, floor, ceiling and boxes hit first by the ray, or nothing.
struct RayHit {
  double t = 0.0;
  std::uint8_t label = labels::kCeiling;
};
std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir);

/// Enclosed by walls in all four axis directions, clear of walls and boxes,
/// and strictly between floor and ceiling.
bool in_free_space(const SyntheticScene& scene, const Vec3& p, double wall_clearance);

SyntheticData generate_scene(const Floorplan2D& fp, const SceneSpec& spec);

struct DriftSpec {
  double sigma_rot_deg = 0.0;  // per step, per axis
  double sigma_t = 0.0;        // meters per step, per axis
};

/// Odometry-style random walk: each relative motion of the ground truth is
/// composed with a small random pose, so errors accumulate along the sequence.
std::vector<Pose> perturb_poses(std::span<const Pose> trajectory, const DriftSpec& drift,
                                std::uint64_t seed);

struct MatchSpec {
  double pixel_noise = 0.0;       // Gaussian sigma in pixels
  double mismatch_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct MatchSynthesis {
  std::vector<KeypointMatch> matches;
  std::vector<std::size_t> mismatched;  // indices into matches
};

/// All co-visible pairs of every landmark. Frame ids are Frame::index of
/// `frames`, which must follow the scene trajectory order.
MatchSynthesis synth_matches(const SyntheticScene& scene, std::span<const Frame> frames,
                             const MatchSpec& spec = {});

/// Exact camera-frame correspondences of the landmarks under ground truth,
/// bypassing pixel sampling and depth quantization.
MatchSet landmark_match_set(const SyntheticScene& scene);

/// 8 x 6 m plan split into three rooms connected by 1 m doors.
Floorplan2D three_room_floorplan();

/// Boxes, a loop trajectory through all three rooms and default camera.
SceneSpec three_room_spec(int frames = 100, std::uint64_t seed = 0);

/// Closed polyline trajectory at fixed height with smoothed heading, a yaw
/// sway and a pitch oscillating in [pitch_min_deg, pitch_max_deg].
std::vector<Pose> loop_trajectory(std::span<const Vec2> waypoints, int frames,
                                  double camera_height = 1.5, double pitch_min_deg = -25.0,
                                  double pitch_max_deg = -10.0, double sway_deg = 20.0);

}  // namespace fpba

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fpba/geometry.hpp"

namespace fpba {

struct FloorplanSegment {
  double u1 = 0.0;
  double v1 = 0.0;
  double u2 = 0.0;
  double v2 = 0.0;

  Vec2 a() const { return {u1, v1}; }
  Vec2 b() const { return {u2, v2}; }
  double length() const { return (b() - a()).norm(); }
};

/// Wall segments in meters. `units_per_meter` records the source units the
/// file was written in.
struct Floorplan2D {
  std::vector<FloorplanSegment> segments;
  double units_per_meter = 1.0;
};

template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;  // row-major

  Grid() = default;
  Grid(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  const T& at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
  bool same_shape(int w, int h) const { return width == w && height == h; }
};

using DepthImage = Grid<std::uint16_t>;
using LabelImage = Grid<std::uint8_t>;

struct Frame {
  int index = 0;
  DepthImage depth;
  LabelImage labels;
  CameraIntrinsics intrinsics;
  Pose initial_pose;
};

struct KeypointMatch {
  int frame_a = 0;
  double ua = 0.0;
  double va = 0.0;
  int frame_b = 0;
  double ub = 0.0;
  double vb = 0.0;
};

struct IndexedPose {
  int index = 0;
  Pose pose;
};

// Floorplan text: "units_per_meter <s>" header then "segment u1 v1 u2 v2"
// records. '#' starts a comment.
Floorplan2D parse_floorplan_text(std::string_view text);
Floorplan2D parse_floorplan(const std::filesystem::path& path);
std::string format_floorplan(const Floorplan2D& fp);
void write_floorplan(const Floorplan2D& fp, const std::filesystem::path& path);

// Trajectory text: "index tx ty tz qx qy qz qw" per line, camera-to-world.
std::vector<IndexedPose> parse_trajectory_text(std::string_view text);
std::vector<IndexedPose> read_trajectory(const std::filesystem::path& path);
std::string format_trajectory(std::span<const IndexedPose> poses);
void write_trajectory(std::span<const IndexedPose> poses, const std::filesystem::path& path);

// Binary PGM (P5). Depth uses maxval 65535 (big-endian samples), labels 255.
DepthImage read_depth(const std::filesystem::path& path);
void write_depth(const DepthImage& img, const std::filesystem::path& path);
LabelImage read_labels(const std::filesystem::path& path);
void write_labels(const LabelImage& img, const std::filesystem::path& path);

inline constexpr const char* kDefaultManifest = "sequence.txt";

/// Sequence manifest lines: "intrinsics fx fy cx cy depth_scale",
/// "trajectory <file>", and "frame <index> <depth.pgm> <labels.pgm>".
/// Paths are relative to `dir`.
std::vector<Frame> load_sequence(const std::filesystem::path& dir,
                                 const std::string& manifest = kDefaultManifest);
void write_sequence(const std::filesystem::path& dir, std::span<const Frame> frames,
                    const std::string& manifest = kDefaultManifest);

struct MatchLoadResult {
  std::vector<KeypointMatch> matches;
  std::size_t dropped_out_of_bounds = 0;
};

// Matches text: "frame_a ua va frame_b ub vb" per line.
MatchLoadResult parse_matches_text(std::string_view text, std::span<const Frame> frames);
MatchLoadResult load_matches(const std::filesystem::path& path, std::span<const Frame> frames);
void write_matches(std::span<const KeypointMatch> matches, const std::filesystem::path& path);

// Binary cloud: "FPCL", u32 version, u32 flags (1 normals, 2 provenance),
// u64 count, then f64 xyz per point, f64 normals, u8 validity, and u32
// (frame,row,col) provenance blocks. All little-endian.
void export_cloud(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud import_cloud(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace fpba

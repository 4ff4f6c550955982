#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fpba/geometry.hpp"
#include "fpba/io.hpp"

namespace fpba {

struct LabelClasses {
  std::uint8_t floor = 1;  // floor, ground, carpet
  std::uint8_t wall = 2;
};

/// World-space cloud whose points stay attached to their source camera.
/// `cloud.provenance[i].frame` is the position of the frame in the sequence.
struct AnchoredCloud {
  PointCloud cloud;
  std::vector<Vec3> local;          // camera-frame coordinates
  std::vector<Vec3> local_normals;  // camera-frame normals, empty if none

  std::size_t size() const { return local.size(); }
  bool empty() const { return local.empty(); }
  std::uint32_t frame(std::size_t i) const { return cloud.provenance[i].frame; }
};

struct SemanticClouds {
  AnchoredCloud full;
  AnchoredCloud floor;
  AnchoredCloud walls;
  int stride = 4;
};

inline constexpr int kDefaultStride = 4;

SemanticClouds build_semantic_clouds(std::span<const Frame> frames, std::span<const Pose> poses,
                                     int stride = kDefaultStride, LabelClasses classes = {});

void repose(AnchoredCloud& cloud, std::span<const Pose> poses);

SemanticClouds repose_clouds(const SemanticClouds& clouds, std::span<const Pose> poses);

/// Estimates world normals (oriented toward the cameras) and caches them in
/// camera coordinates so they follow later pose updates.
void attach_normals(AnchoredCloud& cloud, std::span<const Pose> poses, int k = 16);

}  // namespace fpba

#include "fpba/semantic_clouds.hpp"

namespace fpba {

namespace {

void push_point(AnchoredCloud& c, const Vec3& local, const Pose& pose, Provenance pv) {
  c.local.push_back(local);
  c.cloud.points.push_back(pose * local);
  c.cloud.provenance.push_back(pv);
}

}  // namespace

SemanticClouds build_semantic_clouds(std::span<const Frame> frames, std::span<const Pose> poses,
                                     int stride, LabelClasses classes) {
  if (frames.size() != poses.size()) {
    throw Error(ErrorCode::kCountMismatch, "semantic clouds need one pose per frame");
  }
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "pixel stride must be >= 1");
  SemanticClouds out;
  out.stride = stride;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const Frame& f = frames[fi];
    if (!f.labels.same_shape(f.depth.width, f.depth.height)) {
      throw Error(ErrorCode::kShapeMismatch, "label and depth sizes differ");
    }
    for (int row = 0; row < f.depth.height; row += stride) {
      for (int col = 0; col < f.depth.width; col += stride) {
        const auto local = backproject_pixel(col, row, f.depth.at(row, col), f.intrinsics);
        if (!local) continue;
        const Provenance pv{static_cast<std::uint32_t>(fi), static_cast<std::uint32_t>(row),
                            static_cast<std::uint32_t>(col)};
        push_point(out.full, *local, poses[fi], pv);
        const std::uint8_t label = f.labels.at(row, col);
        if (label == classes.floor) {
          push_point(out.floor, *local, poses[fi], pv);
        } else if (label == classes.wall) {
          push_point(out.walls, *local, poses[fi], pv);
        }
      }
    }
  }
  return out;
}

void repose(AnchoredCloud& c, std::span<const Pose> poses) {
  if (c.cloud.provenance.size() != c.local.size()) {
    throw Error(ErrorCode::kMissingProvenance, "cloud lacks per-point provenance");
  }
  c.cloud.points.resize(c.local.size());
  const bool normals = !c.local_normals.empty();
  if (normals) c.cloud.normals.resize(c.local.size());
  for (std::size_t i = 0; i < c.local.size(); ++i) {
    const std::uint32_t fi = c.cloud.provenance[i].frame;
    if (fi >= poses.size()) {
      throw Error(ErrorCode::kUnknownFrame, "provenance references a frame without a pose");
    }
    c.cloud.points[i] = poses[fi] * c.local[i];
    if (normals) c.cloud.normals[i] = poses[fi].rotation * c.local_normals[i];
  }
}

SemanticClouds repose_clouds(const SemanticClouds& clouds, std::span<const Pose> poses) {
  SemanticClouds out = clouds;
  repose(out.full, poses);
  repose(out.floor, poses);
  repose(out.walls, poses);
  return out;
}

void attach_normals(AnchoredCloud& c, std::span<const Pose> poses, int k) {
  std::vector<Vec3> centers;
  centers.reserve(poses.size());
  for (const auto& p : poses) centers.push_back(p.translation);
  c.cloud = estimate_normals(std::move(c.cloud), k, centers);
  c.local_normals.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c.local_normals[i] = poses[c.frame(i)].rotation.conjugate() * c.cloud.normals[i];
  }
}

}  // namespace fpba

#include "fpba/geometry.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "fpba/kdtree.hpp"

namespace fpba {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kNoDepth: return "no-depth";
    case ErrorCode::kFitFailure: return "fit-failure";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kEmptyFloorplan: return "empty-floorplan";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kCountMismatch: return "count-mismatch";
    case ErrorCode::kUnknownFrame: return "unknown-frame";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kNoFloorPeak: return "no-floor-peak";
    case ErrorCode::kInsufficientDirections: return "insufficient-directions";
    case ErrorCode::kMissingProvenance: return "missing-provenance";
    case ErrorCode::kOutsideFreeSpace: return "outside-free-space";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kNoValidNeighborhood: return "no-valid-neighborhood";
    case ErrorCode::kEmptyInput: return "empty-input";
  }
  return "unknown";
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !(depth_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "camera intrinsics require fx > 0, fy > 0 and depth_scale > 0");
  }
}

Pose Pose::from_rt(const Mat3& r, const Vec3& t) {
  Pose p;
  p.rotation = Eigen::Quaterniond(r).normalized();
  p.translation = t;
  return p;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation = (rotation * other.rotation).normalized();
  out.translation = rotation * other.translation + translation;
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

Pose Pose::retract(const Vec6& delta) const {
  Pose out;
  out.translation = translation + delta.head<3>();
  out.rotation = (rotation * quat_exp(delta.tail<3>())).normalized();
  return out;
}

Eigen::Quaterniond quat_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    return Eigen::Quaterniond(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z())
        .normalized();
  }
  const Vec3 axis = omega / theta;
  const double s = std::sin(0.5 * theta);
  return Eigen::Quaterniond(std::cos(0.5 * theta), s * axis.x(), s * axis.y(), s * axis.z());
}

Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
}

Plane Plane::from_point_normal(const Vec3& point, const Vec3& normal) {
  Plane pl;
  pl.normal = normal.normalized();
  pl.offset = -pl.normal.dot(point);
  return pl;
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(points[i]);
  if (has_normals()) {
    out.normals.reserve(indices.size());
    for (std::size_t i : indices) out.normals.push_back(normals[i]);
    if (!normal_valid.empty()) {
      for (std::size_t i : indices) out.normal_valid.push_back(normal_valid[i]);
    }
  }
  if (has_provenance()) {
    out.provenance.reserve(indices.size());
    for (std::size_t i : indices) out.provenance.push_back(provenance[i]);
  }
  return out;
}

std::optional<Vec3> backproject_pixel(double u, double v, std::uint16_t depth_raw,
                                      const CameraIntrinsics& intr) {
  if (depth_raw == 0) return std::nullopt;
  const double z = static_cast<double>(depth_raw) * intr.depth_scale;
  return Vec3((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z);
}

Vec2 project_point(const Vec3& p_cam, const CameraIntrinsics& intr) {
  return {intr.fx * p_cam.x() / p_cam.z() + intr.cx, intr.fy * p_cam.y() / p_cam.z() + intr.cy};
}

Vec3 transform_point(const Pose& pose, const Vec3& p) { return pose * p; }

CovarianceStats covariance_of(std::span<const Vec3> points) {
  CovarianceStats stats;
  if (points.empty()) return stats;
  for (const Vec3& p : points) stats.mean += p;
  stats.mean /= static_cast<double>(points.size());
  for (const Vec3& p : points) {
    const Vec3 d = p - stats.mean;
    stats.covariance.noalias() += d * d.transpose();
  }
  stats.covariance /= static_cast<double>(points.size());
  return stats;
}

namespace {

// Eigenvalues ascending; rank < 2 when the middle one vanishes.
bool is_degenerate(const Eigen::Vector3d& evals) {
  return evals[2] <= 0.0 || evals[1] <= 1e-12 * evals[2];
}

}  // namespace

Plane fit_plane(std::span<const Vec3> points) {
  if (points.size() < 3) {
    throw Error(ErrorCode::kFitFailure, "plane fit needs at least 3 points");
  }
  const CovarianceStats stats = covariance_of(points);
  Eigen::SelfAdjointEigenSolver<Mat3> solver(stats.covariance);
  if (is_degenerate(solver.eigenvalues())) {
    throw Error(ErrorCode::kFitFailure, "plane fit on collinear points");
  }
  return Plane::from_point_normal(stats.mean, solver.eigenvectors().col(0));
}

double point_plane_distance(const Vec3& p, const Plane& plane) {
  return std::abs(plane.signed_distance(p));
}

PointCloud estimate_normals(PointCloud cloud, int k, std::span<const Vec3> viewpoints) {
  if (k < 2 || cloud.size() < static_cast<std::size_t>(k) + 1) {
    throw Error(ErrorCode::kInvalidArgument, "normal estimation needs at least k+1 points");
  }
  const KdTree tree(cloud.points);
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());

  const bool use_viewpoints = cloud.has_provenance() && !viewpoints.empty();
  cloud.normals.assign(cloud.size(), Vec3::Zero());
  cloud.normal_valid.assign(cloud.size(), 0);
  std::vector<Vec3> hood;
  hood.reserve(static_cast<std::size_t>(k) + 1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    hood.clear();
    for (const auto& nb : tree.knn(cloud.points[i], static_cast<std::size_t>(k) + 1)) {
      hood.push_back(cloud.points[nb.index]);
    }
    // Center on the query point before accumulating for better conditioning.
    const Vec3 anchor = cloud.points[i];
    for (Vec3& h : hood) h -= anchor;
    const CovarianceStats stats = covariance_of(hood);
    Eigen::SelfAdjointEigenSolver<Mat3> solver(stats.covariance);
    if (is_degenerate(solver.eigenvalues())) continue;
    Vec3 n = solver.eigenvectors().col(0).normalized();

    if (use_viewpoints && cloud.provenance[i].frame < viewpoints.size()) {
      if (n.dot(viewpoints[cloud.provenance[i].frame] - cloud.points[i]) < 0.0) n = -n;
    } else {
      const double side = n.dot(cloud.points[i] - centroid);
      if (std::abs(side) > 1e-9) {
        if (side < 0.0) n = -n;
      } else {
        int dom = 0;
        n.cwiseAbs().maxCoeff(&dom);
        if (n[dom] < 0.0) n = -n;
      }
    }
    cloud.normals[i] = n;
    cloud.normal_valid[i] = 1;
  }
  return cloud;
}

}  // namespace fpba

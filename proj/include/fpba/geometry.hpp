#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fpba {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

enum class ErrorCode {
  kInvalidArgument,
  kNoDepth,
  kFitFailure,
  kParse,
  kEmptyFloorplan,
  kShapeMismatch,
  kCountMismatch,
  kUnknownFrame,
  kIo,
  kDegenerate,
  kNoFloorPeak,
  kInsufficientDirections,
  kMissingProvenance,
  kOutsideFreeSpace,
  kNumerical,
  kNoValidNeighborhood,
  kEmptyInput,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double depth_scale = 0.001;  // meters per stored depth unit

  void validate() const;
};

/// Rigid camera-to-world transform. Camera frame: x right, y down, z forward.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_rt(const Mat3& r, const Vec3& t);

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Pose operator*(const Pose& other) const;
  Pose inverse() const;

  /// Applies a 6-vector increment [dt; dtheta]: translation is additive,
  /// rotation is right-composed with exp(dtheta) and renormalized.
  Pose retract(const Vec6& delta) const;
};

/// Exponential map so(3) -> unit quaternion.
Eigen::Quaterniond quat_exp(const Vec3& omega);

/// Rotation about the world y-axis.
Mat3 yaw_rotation(double yaw);

struct Plane {
  Vec3 normal = Vec3::UnitY();
  double offset = 0.0;  // normal . x + offset = 0

  static Plane from_point_normal(const Vec3& point, const Vec3& normal);
  double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }
};

struct Provenance {
  std::uint32_t frame = 0;
  std::uint32_t row = 0;
  std::uint32_t col = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;               // empty or same size as points
  std::vector<std::uint8_t> normal_valid;  // empty or same size as normals
  std::vector<Provenance> provenance;      // empty or same size as points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_provenance() const { return !provenance.empty(); }
  bool normal_ok(std::size_t i) const {
    return has_normals() && (normal_valid.empty() || normal_valid[i] != 0);
  }

  /// Copies the subset of entries selected by index, keeping all attributes.
  PointCloud select(std::span<const std::size_t> indices) const;
};

/// Pinhole backprojection of a pixel. Returns nullopt for zero depth.
std::optional<Vec3> backproject_pixel(double u, double v, std::uint16_t depth_raw,
                                      const CameraIntrinsics& intr);

/// Pinhole projection of a camera-frame point to (u, v).
Vec2 project_point(const Vec3& p_cam, const CameraIntrinsics& intr);

Vec3 transform_point(const Pose& pose, const Vec3& p);

/// Total least-squares plane through the centroid.
Plane fit_plane(std::span<const Vec3> points);

double point_plane_distance(const Vec3& p, const Plane& plane);

struct CovarianceStats {
  Vec3 mean = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();  // population covariance (1/n)
};

CovarianceStats covariance_of(std::span<const Vec3> points);

/// k-NN normal estimation. When the cloud carries provenance and
/// `viewpoints` is indexed by frame, normals are flipped toward the camera
/// center; otherwise they point away from the cloud centroid.
PointCloud estimate_normals(PointCloud cloud, int k = 16,
                            std::span<const Vec3> viewpoints = {});

}  // namespace fpba

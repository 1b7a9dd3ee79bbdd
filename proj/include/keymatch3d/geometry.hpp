#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace keymatch3d {

using Point2 = Eigen::Vector2d;  // pixels, origin top-left, pixel centers at integers
using Point3 = Eigen::Vector3d;  // meters
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics. Focal lengths and principal point are in pixels.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws std::domain_error unless fx, fy > 0 and width, height >= 1.
  void validate() const;
  bool contains(const Point2& u) const;
};

/// Rigid-body motion x -> R x + t.
///
/// Camera poses use the camera-to-world convention: applying a pose to a
/// point expressed in the camera frame yields its world coordinates.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Point3::Zero()) {}
  /// Throws std::domain_error if `rotation` is not a proper rotation (1e-9).
  RigidTransform(const Mat3& rotation, const Point3& translation);

  static RigidTransform identity() { return {}; }

  const Mat3& rotation() const { return rotation_; }
  const Point3& translation() const { return translation_; }

  Point3 operator()(const Point3& p) const { return rotation_ * p + translation_; }

  bool operator==(const RigidTransform&) const = default;

 private:
  Mat3 rotation_;
  Point3 translation_;
};

Point2 project(const CameraIntrinsics& intrinsics, const Point3& p_cam);
Point3 backproject(const CameraIntrinsics& intrinsics, const Point2& u, double depth);
Point3 transform_point(const RigidTransform& g, const Point3& p);

/// compose(a, b) applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& g);

/// Rotation angle of g in radians, in [0, pi].
double rotation_angle(const RigidTransform& g);

/// Random rigid motion: uniform axis, angle uniform in [0, max_angle],
/// uniform translation direction with norm uniform in [0, max_translation].
RigidTransform sample_perturbation(std::mt19937_64& rng, double max_angle, double max_translation);

/// Pose text format: 12 whitespace-separated decimals per line, row-major [R|t].
std::string format_pose(const RigidTransform& g);
RigidTransform parse_pose(const std::string& line);
void write_poses(std::ostream& os, const std::vector<RigidTransform>& poses);
std::vector<RigidTransform> read_poses(std::istream& is);

}  // namespace keymatch3d

#pragma once

#include <Eigen/Dense>
#include <optional>

namespace egfs {

/// 3D point in the world frame (meters).
using SceneCoordinate = Eigen::Vector3d;
/// 2D image-plane location (pixels).
using PixelPoint = Eigen::Vector2d;
/// se3 tangent vector, translation part first: (rho, omega).
using Twist = Eigen::Matrix<double, 6, 1>;

/// Minimum camera-frame depth for a projection to count as in front of the
/// camera. Anything closer is reported as behind-camera.
inline constexpr double kMinDepth = 0.1;

/// Camera-frame depth assumed when back-projecting a pixel into a dummy
/// regression target for invalid predictions.
inline constexpr double kDummyDepth = 10.0;

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
  bool contains(const PixelPoint& p) const {
    return p.x() >= 0 && p.x() < width && p.y() >= 0 && p.y() < height;
  }
};

/// Rigid camera-to-world transform: maps camera-frame points into the world
/// frame. World points enter the camera through inverse(), so the projection
/// of a world point y under pose h reads K * (h^-1 y).
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  Pose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  /// Applies the transform to a point.
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  /// Camera position in the world frame.
  Eigen::Vector3d center() const { return translation; }

  /// Max deviation of R^T R from identity plus |det(R) - 1|.
  double orthonormality_error() const;
};

/// Composition: (a o b) p = a (b p).
Pose pose_compose(const Pose& a, const Pose& b);
inline Pose pose_inverse(const Pose& h) { return h.inverse(); }

/// Perspective projection of world point y through intrinsics k under pose h.
/// Returns nullopt when the camera-frame depth is below kMinDepth.
std::optional<PixelPoint> project(const SceneCoordinate& y, const Pose& h,
                                  const CameraIntrinsics& k);

/// Pixel distance between p and the projection of y under h_star;
/// nullopt when the projection is behind the camera.
std::optional<double> reprojection_error(const PixelPoint& p,
                                         const SceneCoordinate& y,
                                         const Pose& h_star,
                                         const CameraIntrinsics& k);

/// World point that back-projects pixel p at camera-frame depth kDummyDepth.
SceneCoordinate dummy_coordinate(const PixelPoint& p, const Pose& h_star,
                                 const CameraIntrinsics& k);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Exponential map; twist = (rho, omega).
Pose se3_exp(const Twist& twist);

/// Logarithm map, inverse of se3_exp for rotation angles below pi.
/// Uses a Taylor branch below |omega| = 1e-6 and a quaternion-based axis/angle
/// extraction that stays stable near pi.
Twist se3_log(const Pose& h);

/// Unit quaternion (w, x, y, z) for a rotation matrix.
Eigen::Vector4d rotation_to_quaternion_wxyz(const Eigen::Matrix3d& r);

/// Rotation matrix from a (w, x, y, z) quaternion; normalizes the input.
Eigen::Matrix3d quaternion_wxyz_to_rotation(const Eigen::Vector4d& q);

}  // namespace egfs

#include "egfs/geometry.hpp"

#include <cmath>

namespace egfs {

double Pose::orthonormality_error() const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  const double dev = (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return dev + std::abs(rotation.determinant() - 1.0);
}

Pose pose_compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

std::optional<PixelPoint> project(const SceneCoordinate& y, const Pose& h,
                                  const CameraIntrinsics& k) {
  const Eigen::Vector3d yc = h.rotation.transpose() * (y - h.translation);
  if (yc.z() < kMinDepth) return std::nullopt;
  return PixelPoint(k.fx * yc.x() / yc.z() + k.cx,
                    k.fy * yc.y() / yc.z() + k.cy);
}

std::optional<double> reprojection_error(const PixelPoint& p,
                                         const SceneCoordinate& y,
                                         const Pose& h_star,
                                         const CameraIntrinsics& k) {
  const auto proj = project(y, h_star, k);
  if (!proj) return std::nullopt;
  return (p - *proj).norm();
}

SceneCoordinate dummy_coordinate(const PixelPoint& p, const Pose& h_star,
                                 const CameraIntrinsics& k) {
  const Eigen::Vector3d yc(kDummyDepth * (p.x() - k.cx) / k.fx,
                           kDummyDepth * (p.y() - k.cy) / k.fy, kDummyDepth);
  return h_star * yc;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Pose se3_exp(const Twist& twist) {
  const Eigen::Vector3d rho = twist.head<3>();
  const Eigen::Vector3d omega = twist.tail<3>();
  const double theta = omega.norm();
  const Eigen::Matrix3d w = skew(omega);

  Eigen::Matrix3d r, v;
  if (theta < 1e-6) {
    r = Eigen::Matrix3d::Identity() + w + 0.5 * w * w;
    v = Eigen::Matrix3d::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  } else {
    const double t2 = theta * theta;
    r = Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * w +
        ((1.0 - std::cos(theta)) / t2) * w * w;
    v = Eigen::Matrix3d::Identity() + ((1.0 - std::cos(theta)) / t2) * w +
        ((theta - std::sin(theta)) / (t2 * theta)) * w * w;
  }
  return {r, v * rho};
}

Twist se3_log(const Pose& h) {
  // Axis/angle through the quaternion: theta = 2 atan2(|q_v|, |q_w|) is
  // well-conditioned near both 0 and pi, unlike acos of the trace.
  const Eigen::Vector4d q = rotation_to_quaternion_wxyz(h.rotation);
  const double qw = q(0);
  const Eigen::Vector3d qv(q(1), q(2), q(3));
  const double vn = qv.norm();

  Eigen::Vector3d omega;
  if (vn < 1e-12) {
    omega = 2.0 * qv;  // identity rotation up to first order
  } else {
    const double theta =
        2.0 * std::atan2(vn, std::abs(qw)) * (qw < 0 ? -1.0 : 1.0);
    omega = (theta / vn) * qv;
  }

  const double theta = omega.norm();
  const Eigen::Matrix3d w = skew(omega);
  Eigen::Matrix3d v_inv;
  if (theta < 1e-6) {
    v_inv = Eigen::Matrix3d::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
  } else {
    // c = (1/theta^2) (1 - theta sin / (2 (1 - cos))) is finite at pi.
    const double t2 = theta * theta;
    const double c =
        (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
    v_inv = Eigen::Matrix3d::Identity() - 0.5 * w + c * w * w;
  }

  Twist twist;
  twist.head<3>() = v_inv * h.translation;
  twist.tail<3>() = omega;
  return twist;
}

Eigen::Vector4d rotation_to_quaternion_wxyz(const Eigen::Matrix3d& r) {
  // Shepperd's method: pick the largest of the four squared components.
  const double t = r.trace();
  Eigen::Vector4d q;
  if (t > 0) {
    double s = std::sqrt(t + 1.0) * 2.0;
    q << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s,
        (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    q << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s,
        (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s,
        (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s,
        (r(1, 2) + r(2, 1)) / s, 0.25 * s;
  }
  return q.normalized();
}

Eigen::Matrix3d quaternion_wxyz_to_rotation(const Eigen::Vector4d& q_in) {
  const Eigen::Vector4d q = q_in.normalized();
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

}  // namespace egfs

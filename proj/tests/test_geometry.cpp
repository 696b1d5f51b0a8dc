#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "egfs/geometry.hpp"
#include "egfs/rng.hpp"

using namespace egfs;

namespace {

// ---------------------------------------------------------------------------
// Independent projection oracle: plain 4x4 homogeneous arithmetic with a
// Gauss-Jordan inverse. Shares no code with the implementation.
// ---------------------------------------------------------------------------

using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 pose_to_mat4(const Pose& h) {
  Mat4 m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r][c] = h.rotation(r, c);
    m[r][3] = h.translation(r);
  }
  m[3] = {0, 0, 0, 1};
  return m;
}

Mat4 invert4(Mat4 a) {
  Mat4 inv{};
  for (int i = 0; i < 4; ++i) inv[i][i] = 1;
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (int c = 0; c < 4; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int c = 0; c < 4; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

std::array<double, 3> oracle_camera_point(const Pose& h,
                                          const SceneCoordinate& y) {
  const Mat4 t_inv = invert4(pose_to_mat4(h));
  std::array<double, 4> yh{y.x(), y.y(), y.z(), 1.0};
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    double acc = 0;
    for (int c = 0; c < 4; ++c) acc += t_inv[r][c] * yh[c];
    out[r] = acc;
  }
  return out;
}

std::array<double, 2> oracle_project(const SceneCoordinate& y, const Pose& h,
                                     const CameraIntrinsics& k) {
  const auto p = oracle_camera_point(h, y);
  return {k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy};
}

Pose random_pose(Rng& rng, double max_angle = 2.5, double max_trans = 1.0) {
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  const double angle = rng.uniform(0.0, max_angle);
  Twist tw;
  tw.head<3>() =
      Eigen::Vector3d(rng.uniform(-max_trans, max_trans),
                      rng.uniform(-max_trans, max_trans),
                      rng.uniform(-max_trans, max_trans));
  tw.tail<3>() = angle * axis;
  return se3_exp(tw);
}

}  // namespace

TEST_CASE("project: principal axis and simple offsets") {
  const CameraIntrinsics k{100, 100, 50, 50, 100, 100};
  const Pose h = Pose::identity();
  auto p = project(SceneCoordinate(0, 0, 1), h, k);
  REQUIRE(p.has_value());
  CHECK(p->x() == doctest::Approx(50).epsilon(1e-12));
  CHECK(p->y() == doctest::Approx(50).epsilon(1e-12));

  p = project(SceneCoordinate(0.5, 0, 1), h, k);
  REQUIRE(p.has_value());
  CHECK(p->x() == doctest::Approx(100).epsilon(1e-12));
  CHECK(p->y() == doctest::Approx(50).epsilon(1e-12));
}

TEST_CASE("project: behind-camera is a value") {
  const CameraIntrinsics k{100, 100, 50, 50, 100, 100};
  CHECK(!project(SceneCoordinate(0, 0, -1), Pose::identity(), k).has_value());
  CHECK(!project(SceneCoordinate(0, 0, 0.05), Pose::identity(), k).has_value());
  CHECK(project(SceneCoordinate(0, 0, 0.11), Pose::identity(), k).has_value());
}

TEST_CASE("project matches the independent oracle") {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  const double c = std::cos(std::numbers::pi / 6);
  const double s = std::sin(std::numbers::pi / 6);
  Pose h;
  h.rotation << c, -s, 0, s, c, 0, 0, 0, 1;
  h.translation = Eigen::Vector3d(0.1, -0.2, 0.3);

  const SceneCoordinate y(1, 2, 3);
  const auto expected = oracle_project(y, h, k);
  const auto got = project(y, h, k);
  REQUIRE(got.has_value());
  CHECK(std::abs(got->x() - expected[0]) < 1e-9);
  CHECK(std::abs(got->y() - expected[1]) < 1e-9);

  Rng rng(42);
  int checked = 0;
  while (checked < 200) {
    const Pose hr = random_pose(rng);
    const SceneCoordinate yr(rng.uniform(-3, 3), rng.uniform(-3, 3),
                             rng.uniform(-3, 3));
    const auto impl = project(yr, hr, k);
    if (!impl) continue;
    const auto orc = oracle_project(yr, hr, k);
    CHECK(std::abs(impl->x() - orc[0]) < 1e-9);
    CHECK(std::abs(impl->y() - orc[1]) < 1e-9);
    ++checked;
  }
}

TEST_CASE("reprojection_error: basics and oracle") {
  const CameraIntrinsics k{100, 100, 50, 50, 100, 100};
  const Pose h = Pose::identity();

  // self-projection
  const SceneCoordinate y(0.2, -0.1, 2.0);
  const auto p = project(y, h, k);
  REQUIRE(p.has_value());
  CHECK(*reprojection_error(*p, y, h, k) == doctest::Approx(0).epsilon(1e-15));

  // 3-4-5 triangle from the principal point
  CHECK(*reprojection_error(PixelPoint(53, 54), SceneCoordinate(0, 0, 1), h, k) ==
        doctest::Approx(5.0).epsilon(1e-12));

  // behind camera -> invalid
  CHECK(!reprojection_error(PixelPoint(0, 0), SceneCoordinate(0, 0, -1), h, k)
             .has_value());

  Rng rng(7);
  const CameraIntrinsics k2{500, 480, 320, 240, 640, 480};
  int checked = 0;
  while (checked < 200) {
    const Pose hr = random_pose(rng);
    const SceneCoordinate yr(rng.uniform(-3, 3), rng.uniform(-3, 3),
                             rng.uniform(-3, 3));
    const PixelPoint pr(rng.uniform(0, 640), rng.uniform(0, 480));
    const auto impl = reprojection_error(pr, yr, hr, k2);
    if (!impl) continue;
    const auto orc = oracle_project(yr, hr, k2);
    const double expected = std::hypot(pr.x() - orc[0], pr.y() - orc[1]);
    CHECK(std::abs(*impl - expected) < 1e-9);
    ++checked;
  }
}

TEST_CASE("reprojection_error: world-frame gauge invariance") {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  Rng rng(11);
  int checked = 0;
  while (checked < 100) {
    const Pose h = random_pose(rng);
    const Pose g = random_pose(rng);
    const SceneCoordinate y(rng.uniform(-2, 2), rng.uniform(-2, 2),
                            rng.uniform(-2, 2));
    const PixelPoint p(rng.uniform(0, 640), rng.uniform(0, 480));
    const auto base = reprojection_error(p, y, h, k);
    if (!base) continue;
    const auto moved = reprojection_error(p, g * y, pose_compose(g, h), k);
    REQUIRE(moved.has_value());
    CHECK(std::abs(*base - *moved) < 1e-9);
    ++checked;
  }
}

TEST_CASE("dummy_coordinate: principal ray and unit offset") {
  const CameraIntrinsics k{100, 100, 50, 50, 100, 100};
  const Pose h = Pose::identity();
  CHECK((dummy_coordinate(PixelPoint(50, 50), h, k) -
         SceneCoordinate(0, 0, 10))
            .norm() < 1e-12);
  CHECK((dummy_coordinate(PixelPoint(150, 50), h, k) -
         SceneCoordinate(10, 0, 10))
            .norm() < 1e-12);
}

TEST_CASE("dummy_coordinate: round-trip under 1e-6 px for 1000 random draws") {
  Rng rng(3);
  const CameraIntrinsics k{300, 310, 160, 120, 320, 240};
  for (int i = 0; i < 1000; ++i) {
    const Pose h = random_pose(rng);
    const PixelPoint p(rng.uniform(0, 320), rng.uniform(0, 240));
    const SceneCoordinate y = dummy_coordinate(p, h, k);
    const auto back = project(y, h, k);
    REQUIRE(back.has_value());
    CHECK((*back - p).norm() < 1e-6);
  }
}

TEST_CASE("pose compose/inverse: group behavior") {
  Rng rng(5);
  const Pose h = random_pose(rng);
  const Pose id = pose_compose(h, pose_inverse(h));
  CHECK((id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK(id.translation.norm() < 1e-12);

  // orthonormality after 1000 random compositions
  Pose acc = Pose::identity();
  for (int i = 0; i < 1000; ++i) acc = pose_compose(acc, random_pose(rng));
  CHECK(acc.orthonormality_error() < 1e-9);
}

TEST_CASE("se3 exp/log: identity and round-trip") {
  CHECK(se3_exp(Twist::Zero()).orthonormality_error() < 1e-15);
  CHECK(se3_exp(Twist::Zero()).translation.norm() == 0);

  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    Twist tw;
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    tw.tail<3>() = axis * rng.uniform(1e-9, 3.0);
    tw.head<3>() = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2),
                                   rng.uniform(-2, 2));
    const Twist back = se3_log(se3_exp(tw));
    CHECK((back - tw).norm() < 1e-9);
  }
}

TEST_CASE("se3 log: stable near rotation angle pi") {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    Twist tw;
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    tw.tail<3>() = axis * (std::numbers::pi - rng.uniform(1e-8, 1e-3));
    tw.head<3>() = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                   rng.uniform(-1, 1));
    const Twist back = se3_log(se3_exp(tw));
    CHECK((back - tw).norm() < 1e-6);
  }
}

TEST_CASE("quaternion round-trip") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const Pose h = random_pose(rng, 3.1);
    const Eigen::Matrix3d r =
        quaternion_wxyz_to_rotation(rotation_to_quaternion_wxyz(h.rotation));
    CHECK((r - h.rotation).cwiseAbs().maxCoeff() < 1e-12);
  }
}

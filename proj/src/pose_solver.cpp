#include "egfs/pose_solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "egfs/stats.hpp"

namespace egfs {

CorrespondenceSet confidence_filter(const CorrespondenceSet& cs,
                                    int min_inliers) {
  if (cs.items.empty())
    throw std::invalid_argument("confidence_filter: empty set");
  std::vector<double> conf;
  conf.reserve(cs.items.size());
  for (const auto& item : cs.items) conf.push_back(item.c);
  const double median = median_interpolated(std::move(conf));

  CorrespondenceSet kept;
  kept.intrinsics = cs.intrinsics;
  for (const auto& item : cs.items)
    if (item.c > median) kept.items.push_back(item);
  if (static_cast<int>(kept.items.size()) < min_inliers) {
    std::cerr << "confidence_filter: " << kept.items.size()
              << " survivors < " << min_inliers << "; keeping unfiltered set\n";
    return cs;
  }
  return kept;
}

namespace {

// Ascending-coefficient polynomial product.
std::vector<double> poly_mul(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

double poly_eval(const std::vector<double>& c, double x) {
  double v = 0;
  for (size_t i = c.size(); i-- > 0;) v = v * x + c[i];
  return v;
}

double poly_eval_deriv(const std::vector<double>& c, double x) {
  double v = 0;
  for (size_t i = c.size(); i-- > 1;) v = v * x + c[i] * static_cast<double>(i);
  return v;
}

/// Real roots via companion-matrix eigenvalues, with Newton polishing.
std::vector<double> real_roots(std::vector<double> coeffs) {
  double maxc = 0;
  for (double c : coeffs) maxc = std::max(maxc, std::abs(c));
  if (maxc == 0) return {};
  while (coeffs.size() > 1 && std::abs(coeffs.back()) < 1e-12 * maxc)
    coeffs.pop_back();
  const int degree = static_cast<int>(coeffs.size()) - 1;
  if (degree < 1) return {};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < degree; ++i)
    companion(i, degree - 1) = -coeffs[i] / coeffs[degree];

  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z.imag()) > 1e-4 * std::max(1.0, std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {
      const double f = poly_eval(coeffs, x);
      const double df = poly_eval_deriv(coeffs, x);
      if (std::abs(df) < 1e-30) break;
      x -= f / df;
    }
    roots.push_back(x);
  }
  return roots;
}

/// Rigid transform X_i ~ R P_i + t by SVD (exact for noiseless points).
Pose kabsch_world_to_camera(const std::array<Eigen::Vector3d, 3>& world,
                            const std::array<Eigen::Vector3d, 3>& camera) {
  Eigen::Vector3d pc = Eigen::Vector3d::Zero(), xc = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) {
    pc += world[i];
    xc += camera[i];
  }
  pc /= 3;
  xc /= 3;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) h += (world[i] - pc) * (camera[i] - xc).transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
    fix(2, 2) = -1;
    r = svd.matrixV() * fix * svd.matrixU().transpose();
  }
  return {r, xc - r * pc};  // camera-from-world
}

}  // namespace

std::vector<Pose> p3p(const std::array<Correspondence, 3>& triple,
                      const CameraIntrinsics& k) {
  const Eigen::Vector3d p1 = triple[0].y, p2 = triple[1].y, p3 = triple[2].y;
  if (0.5 * ((p2 - p1).cross(p3 - p1)).norm() <= 1e-9) return {};

  std::array<Eigen::Vector3d, 3> bearings;
  for (int i = 0; i < 3; ++i) {
    bearings[i] = Eigen::Vector3d((triple[i].p.x() - k.cx) / k.fx,
                                  (triple[i].p.y() - k.cy) / k.fy, 1.0)
                      .normalized();
  }

  const double a = (p2 - p3).norm();
  const double b = (p1 - p3).norm();
  const double c = (p1 - p2).norm();
  const double cos_a = bearings[1].dot(bearings[2]);
  const double cos_b = bearings[0].dot(bearings[2]);
  const double cos_c = bearings[0].dot(bearings[1]);

  // Grunert's system with s2 = u s1, s3 = v s1 reduces to
  // N(v)^2 - 2 cos_c N(v) D(v) + G(v) D(v)^2 = 0 with u = N/D.
  const double m = (a * a - c * c) / (b * b);
  const double cb2 = (c * c) / (b * b);
  const std::vector<double> n_poly{m + 1.0, -2.0 * m * cos_b, m - 1.0};
  const std::vector<double> d_poly{2.0 * cos_c, -2.0 * cos_a};
  const std::vector<double> g_poly{1.0 - cb2, 2.0 * cb2 * cos_b, -cb2};

  std::vector<double> quartic = poly_mul(n_poly, n_poly);
  const std::vector<double> nd = poly_mul(n_poly, d_poly);
  const std::vector<double> gdd = poly_mul(g_poly, poly_mul(d_poly, d_poly));
  quartic.resize(5, 0.0);
  for (size_t i = 0; i < nd.size(); ++i) quartic[i] -= 2.0 * cos_c * nd[i];
  for (size_t i = 0; i < gdd.size(); ++i) quartic[i] += gdd[i];

  std::vector<Pose> candidates;
  for (double v : real_roots(quartic)) {
    if (!(v > 0)) continue;
    const double denom = poly_eval(d_poly, v);
    if (std::abs(denom) < 1e-12) continue;
    const double u = poly_eval(n_poly, v) / denom;
    if (!(u > 0)) continue;
    const double s1_sq = b * b / (1.0 + v * v - 2.0 * v * cos_b);
    if (!(s1_sq > 0)) continue;
    const double s1 = std::sqrt(s1_sq);
    const std::array<double, 3> s{s1, u * s1, v * s1};

    std::array<Eigen::Vector3d, 3> camera_points;
    for (int i = 0; i < 3; ++i) camera_points[i] = s[i] * bearings[i];
    const Pose cam_from_world =
        kabsch_world_to_camera({p1, p2, p3}, camera_points);
    const Pose h = cam_from_world.inverse();

    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) {
      const auto err = reprojection_error(triple[i].p, triple[i].y, h, k);
      ok = err.has_value() && *err < 1e-6;
    }
    if (!ok) continue;

    bool duplicate = false;
    for (const Pose& other : candidates) {
      if ((other.rotation - h.rotation).cwiseAbs().maxCoeff() < 1e-9 &&
          (other.translation - h.translation).cwiseAbs().maxCoeff() < 1e-9) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) candidates.push_back(h);
  }
  if (candidates.size() > 4) candidates.resize(4);
  return candidates;
}

namespace {

struct HypothesisScore {
  int count = -1;
  double mean_error = std::numeric_limits<double>::infinity();
};

HypothesisScore score_pose(const Pose& pose, const CorrespondenceSet& cs,
                           double threshold) {
  HypothesisScore s;
  s.count = 0;
  double sum = 0;
  for (const auto& item : cs.items) {
    const auto err = reprojection_error(item.p, item.y, pose, cs.intrinsics);
    if (err && *err <= threshold) {
      ++s.count;
      sum += *err;
    }
  }
  s.mean_error = s.count > 0 ? sum / s.count
                             : std::numeric_limits<double>::infinity();
  return s;
}

std::vector<int> inliers_under(const Pose& pose, const CorrespondenceSet& cs,
                               double threshold) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(cs.items.size()); ++i) {
    const auto err =
        reprojection_error(cs.items[i].p, cs.items[i].y, pose, cs.intrinsics);
    if (err && *err <= threshold) idx.push_back(i);
  }
  return idx;
}

}  // namespace

PoseEstimate ransac_pnp(const CorrespondenceSet& cs, const RansacConfig& cfg) {
  PoseEstimate estimate;
  const int n = static_cast<int>(cs.items.size());
  if (n < 3) return estimate;  // too few correspondences; flagged unconverged

  Rng rng(cfg.seed);
  Pose best_pose;
  HypothesisScore best;
  bool found = false;

  for (int h = 0; h < cfg.max_hypotheses; ++h) {
    int i1 = static_cast<int>(rng.uniform_int(n));
    int i2 = static_cast<int>(rng.uniform_int(n));
    while (i2 == i1) i2 = static_cast<int>(rng.uniform_int(n));
    int i3 = static_cast<int>(rng.uniform_int(n));
    while (i3 == i1 || i3 == i2) i3 = static_cast<int>(rng.uniform_int(n));
    ++estimate.hypothesis_count;

    const std::array<Correspondence, 3> triple{cs.items[i1], cs.items[i2],
                                               cs.items[i3]};
    for (const Pose& candidate : p3p(triple, cs.intrinsics)) {
      const HypothesisScore score =
          score_pose(candidate, cs, cfg.inlier_threshold_px);
      if (score.count > best.count ||
          (score.count == best.count && score.mean_error < best.mean_error)) {
        best = score;
        best_pose = candidate;
        found = true;
      }
    }
  }

  if (!found || best.count < cfg.min_inliers) {
    estimate.pose = found ? best_pose : Pose::identity();
    estimate.inliers = found ? inliers_under(best_pose, cs, cfg.inlier_threshold_px)
                             : std::vector<int>{};
    estimate.converged = false;
    return estimate;
  }

  const std::vector<int> support =
      inliers_under(best_pose, cs, cfg.inlier_threshold_px);
  estimate.pose = lm_refine(best_pose, cs, support);
  estimate.inliers = inliers_under(estimate.pose, cs, cfg.inlier_threshold_px);
  estimate.converged = true;
  return estimate;
}

namespace {

constexpr double kLmDepthGuard = 1e-6;

/// Sum of squared reprojection errors under camera-from-world transform T;
/// infinity when a point falls on or behind the camera plane.
double lm_cost(const Pose& cam_from_world, const CorrespondenceSet& cs,
               const std::vector<int>& inliers) {
  double cost = 0;
  const CameraIntrinsics& k = cs.intrinsics;
  for (int idx : inliers) {
    const Eigen::Vector3d x = cam_from_world * cs.items[idx].y;
    if (x.z() <= kLmDepthGuard) return std::numeric_limits<double>::infinity();
    const double du = k.fx * x.x() / x.z() + k.cx - cs.items[idx].p.x();
    const double dv = k.fy * x.y() / x.z() + k.cy - cs.items[idx].p.y();
    cost += du * du + dv * dv;
  }
  return cost;
}

}  // namespace

Pose lm_refine(const Pose& pose0, const CorrespondenceSet& cs,
               const std::vector<int>& inliers,
               std::vector<double>* cost_trace) {
  if (inliers.empty()) return pose0;
  const CameraIntrinsics& k = cs.intrinsics;

  Pose t = pose0.inverse();  // camera-from-world
  double cost = lm_cost(t, cs, inliers);
  double lambda = 1e-3;
  if (cost_trace) cost_trace->push_back(cost);

  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (int idx : inliers) {
      const Eigen::Vector3d x = t * cs.items[idx].y;
      if (x.z() <= kLmDepthGuard) continue;
      const double z_inv = 1.0 / x.z();
      Eigen::Matrix<double, 2, 3> j_proj;
      j_proj << k.fx * z_inv, 0, -k.fx * x.x() * z_inv * z_inv, 0,
          k.fy * z_inv, -k.fy * x.y() * z_inv * z_inv;
      Eigen::Matrix<double, 3, 6> j_se3;
      j_se3.leftCols<3>() = Eigen::Matrix3d::Identity();
      j_se3.rightCols<3>() = -skew(x);
      const Eigen::Matrix<double, 2, 6> j = j_proj * j_se3;
      const Eigen::Vector2d r(k.fx * x.x() * z_inv + k.cx - cs.items[idx].p.x(),
                              k.fy * x.y() * z_inv + k.cy - cs.items[idx].p.y());
      h += j.transpose() * j;
      g += j.transpose() * r;
    }

    bool stepped = false;
    while (lambda <= 1e12) {
      const Eigen::Matrix<double, 6, 6> damped =
          h + lambda * Eigen::Matrix<double, 6, 6>::Identity();
      const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
      if (!delta.allFinite()) {
        lambda *= 10;
        continue;
      }
      const Pose trial = pose_compose(se3_exp(delta), t);
      const double trial_cost = lm_cost(trial, cs, inliers);
      if (trial_cost < cost) {
        const double decrease = cost - trial_cost;
        t = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10, 1e-12);
        stepped = true;
        if (cost_trace) cost_trace->push_back(cost);
        if (delta.norm() < 1e-10 || decrease < 1e-12) return t.inverse();
        break;
      }
      lambda *= 10;
    }
    if (!stepped) break;  // no acceptable step; best-so-far
  }
  return t.inverse();
}

}  // namespace egfs

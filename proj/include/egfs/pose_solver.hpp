#pragma once

#include <vector>

#include "egfs/geometry.hpp"
#include "egfs/rng.hpp"

namespace egfs {

struct Correspondence {
  PixelPoint p;
  SceneCoordinate y;
  double c = 0.5;  // confidence in (0,1)
};

struct CorrespondenceSet {
  std::vector<Correspondence> items;
  CameraIntrinsics intrinsics;

  size_t size() const { return items.size(); }
};

struct RansacConfig {
  double inlier_threshold_px = 10.0;
  int max_hypotheses = 256;
  uint64_t seed = 1;
  int min_inliers = 6;
};

struct PoseEstimate {
  Pose pose;                 // camera-to-world
  std::vector<int> inliers;  // indices into the input set, re-checked under pose
  int hypothesis_count = 0;
  bool converged = false;
};

/// Keeps correspondences with confidence strictly greater than the
/// interpolated median confidence. Degenerate results (fewer than
/// min_inliers survivors) fall back to the unfiltered input.
CorrespondenceSet confidence_filter(const CorrespondenceSet& cs,
                                    int min_inliers = 6);

/// Minimal three-point pose solver (classical quartic with companion-matrix
/// roots). Returns up to four camera-to-world candidates, each of which
/// reprojects the three points within 1e-6 px; empty for collinear points.
std::vector<Pose> p3p(const std::array<Correspondence, 3>& triple,
                      const CameraIntrinsics& k);

/// Seeded P3P RANSAC over minimal triples, scored by inlier count (ties by
/// lower mean inlier error), followed by LM refinement on the winning
/// hypothesis' inliers. converged is false when the best hypothesis has
/// fewer than min_inliers inliers.
PoseEstimate ransac_pnp(const CorrespondenceSet& cs, const RansacConfig& cfg);

/// Levenberg-Marquardt minimization of the summed squared reprojection error
/// over SE3 (left-multiplied se3 increment on the camera-from-world
/// transform). Accepted steps never increase the cost; cost_trace, when
/// given, receives the initial cost followed by each accepted step's cost.
Pose lm_refine(const Pose& pose0, const CorrespondenceSet& cs,
               const std::vector<int>& inliers,
               std::vector<double>* cost_trace = nullptr);

}  // namespace egfs

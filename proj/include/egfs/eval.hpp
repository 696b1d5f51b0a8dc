#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include "egfs/pose_solver.hpp"
#include "egfs/selection.hpp"

namespace egfs {

struct PoseError {
  double translation_cm = 0;
  double rotation_deg = 0;
};

/// Translation between camera centers (cm) and the relative rotation angle
/// (degrees, acos argument clamped to [-1,1]).
PoseError pose_error(const Pose& est, const Pose& gt);

struct AggregateMetrics {
  double median_cm = 0;
  double median_deg = 0;
  double pct_within_5cm_5deg = 0;  // fraction in [0,1]
  size_t count = 0;
};

/// Medians use the lower order statistic; the threshold check is strict
/// (translation < 5 cm AND rotation < 5 deg).
AggregateMetrics aggregate(const std::vector<PoseError>& errors);

/// Per-frame solver seed from the master seed's "ransac" stream, independent
/// of frame processing order.
uint64_t frame_solver_seed(uint64_t master_seed, int frame_id);

/// Inference for one frame: forward pass over the grid, optional
/// confidence-median filtering, then PnP RANSAC with LM refinement.
struct LocalizeResult {
  PoseEstimate estimate;
  int n_correspondences = 0;  // size of the solver input (after filtering)
};
LocalizeResult localize_frame(const RegressorParams& params, const Frame& frame,
                              const RansacConfig& cfg, bool confidence_filter_on);

struct RegionLabelStats {
  size_t count = 0;  // correspondences carrying this label
  std::optional<double> median_reprojection_px;
  std::optional<double> inlier_ratio;
};

struct RegionStats {
  std::map<RegionLabel, RegionLabelStats> per_label;
};

/// Per-label reprojection-error and inlier statistics over test frames.
/// Errors are measured against the ground-truth pose; a correspondence counts
/// as an inlier when it is consistent with the frame's estimated pose within
/// inlier_threshold_px. Cells whose prediction is behind the camera under the
/// ground-truth pose are excluded.
RegionStats region_analysis(const RegressorParams& params,
                            const std::vector<Frame>& frames,
                            const std::vector<PoseEstimate>& estimates,
                            double inlier_threshold_px);

/// ASCII PLY of predicted scene coordinates colored by the appearance
/// channel. With apply_filter, keeps cells at or above the per-frame median
/// confidence, intersected with the final-iteration mask when provided.
void export_point_cloud(const std::filesystem::path& path,
                        const RegressorParams& params,
                        const std::vector<Frame>& frames, bool apply_filter,
                        const std::vector<EgfsMask>* final_masks = nullptr);

}  // namespace egfs

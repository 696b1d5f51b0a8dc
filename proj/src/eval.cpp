#include "egfs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "egfs/io_util.hpp"
#include "egfs/stats.hpp"

namespace egfs {

PoseError pose_error(const Pose& est, const Pose& gt) {
  PoseError e;
  e.translation_cm = (est.center() - gt.center()).norm() * 100.0;
  const double arg =
      std::clamp(((est.rotation.transpose() * gt.rotation).trace() - 1.0) / 2.0,
                 -1.0, 1.0);
  e.rotation_deg = std::acos(arg) * 180.0 / std::numbers::pi;
  return e;
}

AggregateMetrics aggregate(const std::vector<PoseError>& errors) {
  if (errors.empty()) throw std::invalid_argument("aggregate: empty input");
  std::vector<double> trans, rot;
  size_t within = 0;
  for (const auto& e : errors) {
    trans.push_back(e.translation_cm);
    rot.push_back(e.rotation_deg);
    if (e.translation_cm < 5.0 && e.rotation_deg < 5.0) ++within;
  }
  AggregateMetrics m;
  m.median_cm = median_lower(std::move(trans));
  m.median_deg = median_lower(std::move(rot));
  m.pct_within_5cm_5deg = static_cast<double>(within) / errors.size();
  m.count = errors.size();
  return m;
}

uint64_t frame_solver_seed(uint64_t master_seed, int frame_id) {
  return Rng::stream(master_seed, "ransac")
      .substream(static_cast<uint64_t>(frame_id))
      .next_u64();
}

LocalizeResult localize_frame(const RegressorParams& params, const Frame& frame,
                              const RansacConfig& cfg,
                              bool confidence_filter_on) {
  const FramePrediction pred = predict_frame(params, frame);
  CorrespondenceSet cs;
  cs.intrinsics = frame.intrinsics;
  cs.items.reserve(frame.grid.cell_count());
  for (int cell = 0; cell < frame.grid.cell_count(); ++cell)
    cs.items.push_back({frame.grid.pixel(cell), pred.y.col(cell), pred.c(cell)});

  const CorrespondenceSet* input = &cs;
  CorrespondenceSet filtered;
  if (confidence_filter_on) {
    filtered = confidence_filter(cs, cfg.min_inliers);
    input = &filtered;
  }
  LocalizeResult result;
  result.n_correspondences = static_cast<int>(input->items.size());
  result.estimate = ransac_pnp(*input, cfg);
  return result;
}

RegionStats region_analysis(const RegressorParams& params,
                            const std::vector<Frame>& frames,
                            const std::vector<PoseEstimate>& estimates,
                            double inlier_threshold_px) {
  RegionStats stats;
  std::map<RegionLabel, std::vector<double>> errors;
  std::map<RegionLabel, std::pair<size_t, size_t>> inliers;  // (inlier, total)
  for (auto label : {RegionLabel::kStaticTextured, RegionLabel::kTextureLess,
                     RegionLabel::kDynamic}) {
    errors[label] = {};
    inliers[label] = {0, 0};
  }

  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const Frame& frame = frames[fi];
    const FramePrediction pred = predict_frame(params, frame);
    for (int cell = 0; cell < frame.grid.cell_count(); ++cell) {
      const auto err_gt = reprojection_error(
          frame.grid.pixel(cell), pred.y.col(cell), frame.pose_gt,
          frame.intrinsics);
      if (!err_gt) continue;
      const RegionLabel label = frame.grid.label(cell);
      errors[label].push_back(*err_gt);
      auto& [inlier_count, total] = inliers[label];
      ++total;
      const auto err_est =
          reprojection_error(frame.grid.pixel(cell), pred.y.col(cell),
                             estimates[fi].pose, frame.intrinsics);
      if (err_est && *err_est <= inlier_threshold_px) ++inlier_count;
    }
  }

  for (auto& [label, values] : errors) {
    RegionLabelStats s;
    s.count = values.size();
    if (!values.empty()) {
      s.median_reprojection_px = median_lower(values);
      const auto& [inlier_count, total] = inliers[label];
      s.inlier_ratio = static_cast<double>(inlier_count) / total;
    }
    stats.per_label[label] = s;
  }
  return stats;
}

void export_point_cloud(const std::filesystem::path& path,
                        const RegressorParams& params,
                        const std::vector<Frame>& frames, bool apply_filter,
                        const std::vector<EgfsMask>* final_masks) {
  struct Vertex {
    Eigen::Vector3d y;
    Eigen::Vector3f color;
  };
  std::vector<Vertex> vertices;

  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const Frame& frame = frames[fi];
    const FramePrediction pred = predict_frame(params, frame);
    double sigma = 0;
    if (apply_filter) {
      std::vector<double> conf(pred.c.data(), pred.c.data() + pred.c.size());
      sigma = median_interpolated(std::move(conf));
    }
    for (int cell = 0; cell < frame.grid.cell_count(); ++cell) {
      if (apply_filter) {
        if (pred.c(cell) < sigma) continue;
        if (final_masks && !(*final_masks)[fi].selected[cell]) continue;
      }
      vertices.push_back({pred.y.col(cell), frame.grid.appearance_at(cell)});
    }
  }

  std::string out;
  out += "ply\nformat ascii 1.0\n";
  out += "element vertex " + std::to_string(vertices.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";
  for (const auto& v : vertices) {
    char line[160];
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %d %d %d\n", v.y.x(),
                  v.y.y(), v.y.z(),
                  static_cast<int>(std::lround(v.color.x() * 255)),
                  static_cast<int>(std::lround(v.color.y() * 255)),
                  static_cast<int>(std::lround(v.color.z() * 255)));
    out += line;
  }
  write_file_atomic(path, out);
}

}  // namespace egfs

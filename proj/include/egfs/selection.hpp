#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "egfs/regressor.hpp"
#include "egfs/synth.hpp"

namespace egfs {

/// Per-frame grid of raw reprojection errors of the current predictions
/// against the ground-truth pose; cells whose prediction falls behind the
/// camera are marked invalid.
struct ErrorMap {
  int frame_id = 0;
  int rows = 0, cols = 0;
  std::vector<double> error;   // px, meaningful where valid
  std::vector<uint8_t> valid;  // 1 = error defined

  int cell_count() const { return rows * cols; }
  int valid_count() const;
};

struct PromptCell {
  int row = 0, col = 0;
  double error = 0;  // px
};

/// Lowest-error cells of one frame, in ascending (error, row, col) order.
struct PromptSet {
  int frame_id = 0;
  std::vector<PromptCell> cells;
};

/// Per-frame boolean patch mask with provenance.
struct EgfsMask {
  int frame_id = 0;
  int rows = 0, cols = 0;
  std::vector<uint8_t> selected;
  int iteration = 0;
  std::string expander_id;

  int count() const;
  bool at(int row, int col) const { return selected[row * cols + col] != 0; }
};

/// Prompt-to-region expansion strategy (the segmentation-model role).
/// Implementations must return a union of 4-connected components, each of
/// which contains at least one prompt.
class RegionExpander {
 public:
  virtual ~RegionExpander() = default;
  virtual std::string id() const = 0;
  virtual EgfsMask expand(const PromptSet& prompts, const Frame& frame) const = 0;
};

/// Appearance-similarity flood fill: BFS over 4-connected cells whose
/// appearance stays within tolerance (L-infinity) of the running region mean.
class GrowExpander : public RegionExpander {
 public:
  explicit GrowExpander(double appearance_tolerance = 0.05)
      : tolerance_(appearance_tolerance) {}
  std::string id() const override { return "grow"; }
  EgfsMask expand(const PromptSet& prompts, const Frame& frame) const override;

 private:
  double tolerance_;
};

/// Ground-truth oracle: the 4-connected component of cells sharing the
/// prompt's region label.
class OracleExpander : public RegionExpander {
 public:
  std::string id() const override { return "oracle"; }
  EgfsMask expand(const PromptSet& prompts, const Frame& frame) const override;
};

/// Loads precomputed masks (<dir>/<frame_id>.pbm) and keeps the 4-connected
/// components that contain at least one prompt.
class FileExpander : public RegionExpander {
 public:
  explicit FileExpander(std::filesystem::path mask_dir)
      : dir_(std::move(mask_dir)) {}
  std::string id() const override { return "file"; }
  EgfsMask expand(const PromptSet& prompts, const Frame& frame) const override;

 private:
  std::filesystem::path dir_;
};

std::unique_ptr<RegionExpander> make_expander(const std::string& kind,
                                              double appearance_tolerance,
                                              const std::filesystem::path& dir);

/// Predicted coordinates and confidences for every cell of one frame.
struct FramePrediction {
  Eigen::Matrix3Xd y;
  Eigen::RowVectorXd c;
};
FramePrediction predict_frame(const RegressorParams& params,
                              const Frame& frame);

/// Raw reprojection errors of current predictions on every frame.
std::vector<ErrorMap> compute_error_maps(const RegressorParams& params,
                                         const std::vector<Frame>& frames);

ErrorMap error_map_from_predictions(const Frame& frame,
                                    const Eigen::Matrix3Xd& y);

/// Confidence of the current predictions on every cell of every frame.
std::vector<std::vector<double>> compute_confidence_grids(
    const RegressorParams& params, const std::vector<Frame>& frames);

/// The ceil(tau% * n_valid) valid cells with the smallest errors; ties broken
/// by (row, col) lexicographic order. Empty when the frame has no valid cell.
PromptSet select_prompts(const ErrorMap& em, double tau_pct);

/// Keeps mask cells whose confidence reaches the per-frame median confidence
/// (computed over cells marked valid in the error map). Falls back to the
/// unrefined mask when the result would be empty.
EgfsMask refine_with_confidence(const EgfsMask& mask,
                                const std::vector<double>& confidence,
                                const ErrorMap& em);

inline constexpr size_t kBufferCapacity = 2'000'000;

TrainingBuffer build_buffer_random_all(const std::vector<Frame>& frames,
                                       Rng& rng);
TrainingBuffer build_buffer_masked(const std::vector<Frame>& frames,
                                   const std::vector<EgfsMask>& masks,
                                   Rng& rng);
/// Keeps cells with error strictly below the dataset-global q-quantile of the
/// valid error distribution.
TrainingBuffer build_buffer_quantile(const std::vector<Frame>& frames,
                                     const std::vector<ErrorMap>& error_maps,
                                     double q, Rng& rng);

/// Dataset-global quantile threshold used by the baseline sampler: the value
/// ranked at floor(q * n) among the ascending valid errors.
double global_error_quantile(const std::vector<ErrorMap>& error_maps, double q);

/// PBM (P1) serialization of masks; FileExpander reads the same layout.
std::string mask_to_pbm(const EgfsMask& mask);
EgfsMask mask_from_pbm(const std::string& text);

}  // namespace egfs

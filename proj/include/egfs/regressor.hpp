#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <vector>

#include "egfs/geometry.hpp"
#include "egfs/rng.hpp"
#include "egfs/synth.hpp"

namespace egfs {

inline constexpr int kTrunkWidth = 128;
inline constexpr int kTrunkLayers = 4;
inline constexpr int kConfHidden = 64;

struct TrainConfig {
  double alpha = 10.0;           // confidence regularization weight
  double tau_prompt_pct = 10.0;  // prompt percentage for mask generation
  int epochs_total = 20;
  int epochs_per_iteration = 5;  // k: mask regeneration period
  double learning_rate = 1e-3;
  /// Linear learning-rate decay: lr(t) = learning_rate * (1 - decay * t)
  /// over global training progress t. 0 keeps the rate constant.
  double lr_decay = 0.95;
  int batch_size = 256;
  double clamp_w_max_px = 50.0;
  double clamp_w_min_px = 1.0;
  uint64_t seed = 1;
  bool confidence_on = true;  // Eq-2 confidence loss; off freezes c at 1

  void validate() const;  // throws std::invalid_argument
};

/// Trainable tensors in fixed order: trunk (W,b)x4, coord head (W,b),
/// confidence head (W1,b1,W2,b2). Vectors are stored as n x 1 matrices.
using ParamTensors = std::vector<Eigen::MatrixXd>;

/// Scene-specific head: per-patch MLP trunk with a coordinate head and a
/// confidence head. Coordinates are predicted as offsets from scene_center.
/// Each patch is processed independently; there is no cross-patch coupling.
struct RegressorParams {
  ParamTensors tensors;
  Eigen::Vector3d scene_center = Eigen::Vector3d::Zero();
  double scene_radius = 1.0;

  static RegressorParams init(int feature_dim, const Eigen::Vector3d& center,
                              double radius, Rng& rng);

  int input_dim() const { return static_cast<int>(tensors[0].cols()); }
  bool finite() const;
};

struct Prediction {
  SceneCoordinate y;
  double c = 0.5;     // confidence, sigmoid of the head logit, in (0,1)
  bool valid = true;  // V-membership where ground-truth context exists
};

/// Batched forward pass; features are column vectors of the input matrix.
struct ForwardBatch {
  Eigen::Matrix3Xd y;     // world coordinates
  Eigen::RowVectorXd c;   // confidences
};
ForwardBatch forward_batch(const RegressorParams& params,
                           const Eigen::MatrixXd& features);

Prediction forward(const RegressorParams& params,
                   const Eigen::VectorXd& feature);

/// V-membership rule: plausible camera-frame depth under the ground-truth
/// pose, bounded raw reprojection error, and bounded distance from the scene
/// center.
bool prediction_valid(const SceneCoordinate& y, const PixelPoint& pixel,
                      const Pose& pose_gt, const CameraIntrinsics& k,
                      const Eigen::Vector3d& scene_center, double scene_radius);

/// Soft clamp width at training progress t in [0,1]: linear decay from
/// clamp_w_max_px to clamp_w_min_px. The clamped error is w * tanh(r / w).
double clamp_schedule(double t, const TrainConfig& cfg);
double clamped_error(double r, double w);

struct BufferEntry {
  int frame_idx = 0;  // index into the frame list, not frame_id
  int cell = 0;
};

/// Mask- or sampler-selected training samples over a frame list.
struct TrainingBuffer {
  const std::vector<Frame>* frames = nullptr;
  std::vector<BufferEntry> entries;
};

struct LossResult {
  double loss = 0;  // mean per-sample loss
  ParamTensors grad;
  double valid_fraction = 0;
};

/// Mean loss and its exact analytic gradient over a batch. Samples are
/// reduced in canonical (frame_id, cell) order so the result is independent
/// of the batch's input order.
LossResult loss_and_grad(const RegressorParams& params,
                         const std::vector<Frame>& frames,
                         std::span<const BufferEntry> batch, double t,
                         const TrainConfig& cfg);

struct AdamState {
  ParamTensors m, v;
  long step = 0;

  static AdamState init_like(const ParamTensors& tensors);
  void update(ParamTensors& tensors, const ParamTensors& grad, double lr);
};

struct EpochStats {
  double mean_loss = 0;
  double valid_fraction = 0;
};

/// One full pass over the buffer in shuffled mini-batches with Adam updates.
/// Training progress is interpolated from t_begin to t_end across batches.
EpochStats train_epoch(RegressorParams& params, const TrainingBuffer& buffer,
                       double t_begin, double t_end, const TrainConfig& cfg,
                       AdamState& adam, Rng& rng);

/// Checkpoint: magic "EGFSW", version, then per-tensor shapes and f32
/// weights (row-major, little-endian). scene_center and scene_radius are
/// stored as trailing 3x1 and 1x1 tensors.
void save_checkpoint(const std::filesystem::path& path,
                     const RegressorParams& params);
RegressorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace egfs

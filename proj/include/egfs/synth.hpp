#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "egfs/geometry.hpp"
#include "egfs/rng.hpp"

namespace egfs {

/// Patch stride of the feature grid, in pixels.
inline constexpr int kPatchPx = 8;
/// Feature dimension emitted by the synthetic feature generator.
inline constexpr int kFeatureDim = 32;

enum class RegionLabel : uint8_t {
  kStaticTextured = 0,
  kTextureLess = 1,
  kDynamic = 2,
};

const char* region_label_name(RegionLabel label);
RegionLabel region_label_from_name(const std::string& name);

/// Planar rectangular scene surface. Corners are ordered so that
/// corners[1]-corners[0] and corners[3]-corners[0] span the rectangle.
struct Surface {
  int id = 0;
  std::array<Eigen::Vector3d, 4> corners;
  RegionLabel label = RegionLabel::kStaticTextured;
  Eigen::Vector3d appearance = Eigen::Vector3d::Zero();  // base color in [0,1]

  Eigen::Vector3d centroid() const {
    return 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]);
  }
};

/// Rigid body-to-world motion of a dynamic surface at one frame.
struct TrajectorySample {
  Eigen::Vector4d q_wxyz = Eigen::Vector4d(1, 0, 0, 0);
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

/// Fixed injective sinusoidal encoding of world position; the synthetic
/// stand-in for a learned backbone's patch features. The first three
/// components are low-frequency axis-aligned sinusoids (monotone over the
/// scene extent), the rest random directions and frequencies.
struct PositionEncoding {
  Eigen::Matrix<double, Eigen::Dynamic, 3> omega;  // kFeatureDim x 3, rad/m
  Eigen::VectorXd phase;                           // kFeatureDim

  Eigen::VectorXd encode(const Eigen::Vector3d& y) const;
};

struct SyntheticScene {
  uint64_t rng_seed = 0;
  Eigen::Vector3d scene_center = Eigen::Vector3d::Zero();
  std::vector<Surface> surfaces;
  /// surface id -> per-frame rigid motion, indexed by frame_id over the
  /// whole train+test sequence. Only Dynamic surfaces have entries.
  std::map<int, std::vector<TrajectorySample>> dynamic_trajectories;
  PositionEncoding encoding;
  CameraIntrinsics intrinsics;
  std::vector<int> train_frames;
  std::vector<int> test_frames;

  /// Max distance of any surface corner from scene_center.
  double radius() const;
};

/// Per-frame grid of patches. Numeric fields are stored as f32 because the
/// on-disk grid format is f32; keeping memory and disk identical makes the
/// write/read round-trip bit-exact.
struct FeatureGrid {
  int frame_id = 0;
  int rows = 0, cols = 0, dim = kFeatureDim;
  std::vector<float> features;    // rows*cols*dim, row-major cells
  std::vector<float> appearance;  // rows*cols*3
  std::vector<float> gt_coords;   // rows*cols*3
  std::vector<uint8_t> labels;    // rows*cols
  std::vector<float> pixels;      // rows*cols*2 (u, v)

  int cell_count() const { return rows * cols; }
  int cell_index(int row, int col) const { return row * cols + col; }

  const float* feature(int cell) const { return &features[cell * dim]; }
  Eigen::Vector3f appearance_at(int cell) const {
    return Eigen::Map<const Eigen::Vector3f>(&appearance[cell * 3]);
  }
  SceneCoordinate gt_coord(int cell) const {
    return SceneCoordinate(gt_coords[cell * 3], gt_coords[cell * 3 + 1],
                           gt_coords[cell * 3 + 2]);
  }
  RegionLabel label(int cell) const {
    return static_cast<RegionLabel>(labels[cell]);
  }
  PixelPoint pixel(int cell) const {
    return PixelPoint(pixels[cell * 2], pixels[cell * 2 + 1]);
  }

  void resize(int rows_in, int cols_in, int dim_in);
};

struct Frame {
  int frame_id = 0;
  Pose pose_gt;
  CameraIntrinsics intrinsics;
  FeatureGrid grid;
};

struct SceneConfig {
  int n_train_frames = 100;
  int n_test_frames = 30;
  double dynamic_fraction = 0.3;
  double textureless_fraction = 0.2;
  double feature_noise_sigma = 0.01;
  uint64_t seed = 1;

  int image_width = 320;
  int image_height = 240;
  double focal_px = 300.0;

  // Room geometry: cameras orbit inside a cube of tiled wall surfaces.
  double room_half_extent_m = 2.0;
  int tiles_per_edge = 8;
  double orbit_radius_min_m = 1.0;
  double orbit_radius_max_m = 1.4;
  double orbit_height_jitter_m = 0.4;
  double appearance_noise_sigma = 0.02;

  void validate() const;  // throws std::invalid_argument naming the field
};

struct Dataset {
  SyntheticScene scene;
  std::vector<Frame> train;
  std::vector<Frame> test;

  const Frame* frame_by_id(int frame_id) const;
};

/// Generates a deterministic synthetic scene: tiled-room geometry, orbiting
/// look-at cameras, per-patch ground truth, and feature grids with the
/// configured contamination (dynamic content and texture-less regions).
Dataset generate_scene(const SceneConfig& config);

/// One directory per scene: scene.json, poses.txt, grids/<frame_id>.bin.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace egfs

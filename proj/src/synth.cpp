#include "egfs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "egfs/io_util.hpp"
#include "json.hpp"

namespace egfs {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const char* region_label_name(RegionLabel label) {
  switch (label) {
    case RegionLabel::kStaticTextured: return "static_textured";
    case RegionLabel::kTextureLess: return "texture_less";
    case RegionLabel::kDynamic: return "dynamic";
  }
  return "unknown";
}

RegionLabel region_label_from_name(const std::string& name) {
  if (name == "static_textured") return RegionLabel::kStaticTextured;
  if (name == "texture_less") return RegionLabel::kTextureLess;
  if (name == "dynamic") return RegionLabel::kDynamic;
  throw SchemaError("unknown region label: " + name);
}

Eigen::VectorXd PositionEncoding::encode(const Eigen::Vector3d& y) const {
  Eigen::VectorXd out(omega.rows());
  for (Eigen::Index j = 0; j < omega.rows(); ++j) {
    out(j) = std::sin(omega.row(j).dot(y) + phase(j));
  }
  return out;
}

double SyntheticScene::radius() const {
  double r = 0;
  for (const auto& s : surfaces)
    for (const auto& c : s.corners) r = std::max(r, (c - scene_center).norm());
  return r;
}

void FeatureGrid::resize(int rows_in, int cols_in, int dim_in) {
  rows = rows_in;
  cols = cols_in;
  dim = dim_in;
  const size_t n = static_cast<size_t>(rows) * cols;
  features.assign(n * dim, 0.f);
  appearance.assign(n * 3, 0.f);
  gt_coords.assign(n * 3, 0.f);
  labels.assign(n, 0);
  pixels.assign(n * 2, 0.f);
}

void SceneConfig::validate() const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (dynamic_fraction < 0 || dynamic_fraction >= 1)
    bad("dynamic_fraction must be in [0,1)");
  if (textureless_fraction < 0 || textureless_fraction >= 1)
    bad("textureless_fraction must be in [0,1)");
  if (dynamic_fraction + textureless_fraction >= 1)
    bad("dynamic_fraction + textureless_fraction must sum below 1");
  if (n_train_frames < 10) bad("n_train_frames must be >= 10");
  if (n_test_frames < 0) bad("n_test_frames must be >= 0");
  if (feature_noise_sigma < 0) bad("feature_noise_sigma must be >= 0");
  if (image_width <= 0 || image_height <= 0)
    bad("image_width/image_height must be positive");
  if (focal_px <= 0) bad("focal_px must be positive");
  if (tiles_per_edge < 1) bad("tiles_per_edge must be >= 1");
  if (orbit_radius_min_m <= 0 || orbit_radius_max_m < orbit_radius_min_m)
    bad("orbit_radius_min_m/orbit_radius_max_m must satisfy 0 < min <= max");
  if (orbit_radius_max_m >= room_half_extent_m)
    bad("orbit_radius_max_m must be smaller than room_half_extent_m");
}

const Frame* Dataset::frame_by_id(int frame_id) const {
  for (const auto& f : train)
    if (f.frame_id == frame_id) return &f;
  for (const auto& f : test)
    if (f.frame_id == frame_id) return &f;
  return nullptr;
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Face order: (+x, -x, +y, -y, +z, -z). Tangent axes are the other two
// coordinate axes in cyclic order.
struct FaceFrame {
  int axis;
  double sign;
  int u_axis, v_axis;
};

FaceFrame face_frame(int face) {
  const int axis = face / 2;
  const double sign = (face % 2 == 0) ? 1.0 : -1.0;
  return {axis, sign, (axis + 1) % 3, (axis + 2) % 3};
}

PositionEncoding make_encoding(Rng& rng) {
  PositionEncoding enc;
  enc.omega.resize(kFeatureDim, 3);
  enc.phase.resize(kFeatureDim);
  // Axis-aligned low-frequency rows keep the encoding injective over the
  // room extent; remaining rows add discriminative detail.
  enc.omega.setZero();
  for (int j = 0; j < 3; ++j) {
    enc.omega(j, j) = 0.35;
    enc.phase(j) = 0.0;
  }
  for (int j = 3; j < kFeatureDim; ++j) {
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    if (dir.norm() < 1e-12) dir = Eigen::Vector3d::UnitX();
    dir.normalize();
    const double mag = std::exp(rng.uniform(std::log(0.3), std::log(1.2)));
    enc.omega.row(j) = (mag * dir).transpose();
    enc.phase(j) = rng.uniform(0.0, kTau);
  }
  return enc;
}

std::vector<Surface> make_tiled_room(const SceneConfig& cfg,
                                     const Eigen::Vector3d& center, Rng& rng) {
  const int n = cfg.tiles_per_edge;
  const double h = cfg.room_half_extent_m;
  const double tile = 2.0 * h / n;
  const int total = 6 * n * n;

  std::vector<Surface> surfaces(total);
  for (int face = 0; face < 6; ++face) {
    const FaceFrame ff = face_frame(face);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const int id = face * n * n + i * n + j;
        Surface& s = surfaces[id];
        s.id = id;
        const double u0 = -h + i * tile, u1 = u0 + tile;
        const double v0 = -h + j * tile, v1 = v0 + tile;
        auto corner = [&](double u, double v) {
          Eigen::Vector3d c = center;
          c[ff.axis] += ff.sign * h;
          c[ff.u_axis] += u;
          c[ff.v_axis] += v;
          return c;
        };
        s.corners = {corner(u0, v0), corner(u1, v0), corner(u1, v1),
                     corner(u0, v1)};
      }
    }
  }
  for (auto& s : surfaces)
    s.appearance = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());

  // Stratified label assignment: exact counts, random placement.
  int n_dyn = static_cast<int>(std::llround(cfg.dynamic_fraction * total));
  int n_tex = static_cast<int>(std::llround(cfg.textureless_fraction * total));
  if (n_dyn + n_tex >= total) n_tex = total - n_dyn - 1;
  std::vector<RegionLabel> labels(total, RegionLabel::kStaticTextured);
  for (int i = 0; i < n_dyn; ++i) labels[i] = RegionLabel::kDynamic;
  for (int i = n_dyn; i < n_dyn + n_tex; ++i)
    labels[i] = RegionLabel::kTextureLess;
  rng.shuffle(labels);
  for (int i = 0; i < total; ++i) surfaces[i].label = labels[i];

  // Texture-less tiles on a face are one featureless material: they share
  // the first such tile's appearance.
  for (int face = 0; face < 6; ++face) {
    int first = -1;
    for (int i = face * n * n; i < (face + 1) * n * n; ++i) {
      if (surfaces[i].label != RegionLabel::kTextureLess) continue;
      if (first < 0) first = i;
      surfaces[i].appearance = surfaces[first].appearance;
    }
  }
  return surfaces;
}

/// Anchor of the texture-less region per face: the mean centroid of its
/// texture-less tiles. Features of those tiles collapse onto this single
/// point, so position within the region is unrecoverable.
std::array<Eigen::Vector3d, 6> textureless_anchors(
    const std::vector<Surface>& surfaces) {
  const int per_face = static_cast<int>(surfaces.size()) / 6;
  std::array<Eigen::Vector3d, 6> anchors;
  for (int face = 0; face < 6; ++face) {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    int count = 0;
    for (int i = face * per_face; i < (face + 1) * per_face; ++i) {
      if (surfaces[i].label != RegionLabel::kTextureLess) continue;
      sum += surfaces[i].centroid();
      ++count;
    }
    anchors[face] = count > 0 ? Eigen::Vector3d(sum / count)
                              : Eigen::Vector3d::Zero();
  }
  return anchors;
}

std::map<int, std::vector<TrajectorySample>> make_trajectories(
    const SceneConfig& cfg, const std::vector<Surface>& surfaces, int n_frames,
    Rng& rng) {
  const int n = cfg.tiles_per_edge;
  std::map<int, std::vector<TrajectorySample>> out;
  for (const auto& s : surfaces) {
    if (s.label != RegionLabel::kDynamic) continue;
    const FaceFrame ff = face_frame(s.id / (n * n));
    Eigen::Vector3d eu = Eigen::Vector3d::Zero(), ev = Eigen::Vector3d::Zero();
    eu[ff.u_axis] = 1;
    ev[ff.v_axis] = 1;
    const double psi = rng.uniform(0.0, kTau);
    // Amplitude mixture: mostly fast movers whose content is grossly
    // inconsistent across frames, plus a small share of micro movers whose
    // errors sit near the early prompt quantile and only separate from the
    // static regions once the model sharpens.
    const bool micro = rng.uniform() < 0.15;
    const double amp = micro
                           ? std::exp(rng.uniform(std::log(0.015), std::log(0.06)))
                           : std::exp(rng.uniform(std::log(0.3), std::log(1.2)));
    const double cycles = rng.uniform(0.5, 2.5);
    const double phi = rng.uniform(0.0, kTau);
    const Eigen::Vector3d dir = std::cos(psi) * eu + std::sin(psi) * ev;

    std::vector<TrajectorySample> traj(n_frames);
    for (int t = 0; t < n_frames; ++t) {
      traj[t].t =
          amp * std::sin(kTau * cycles * t / std::max(1, n_frames) + phi) * dir;
    }
    out[s.id] = std::move(traj);
  }
  return out;
}

Pose look_at_pose(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                  double roll) {
  const Eigen::Vector3d forward = (target - position).normalized();
  const Eigen::Vector3d image_down(0, 0, -1);
  Eigen::Vector3d x_cam = image_down.cross(forward);
  if (x_cam.norm() < 1e-9) x_cam = Eigen::Vector3d::UnitX();
  x_cam.normalize();
  const Eigen::Vector3d y_cam = forward.cross(x_cam);
  Eigen::Matrix3d r;
  r.col(0) = x_cam;
  r.col(1) = y_cam;
  r.col(2) = forward;
  r = Eigen::AngleAxisd(roll, forward).toRotationMatrix() * r;
  return {r, position};
}

std::vector<Pose> make_orbit_poses(const SceneConfig& cfg,
                                   const Eigen::Vector3d& center, int count,
                                   double angle_offset, Rng& rng) {
  std::vector<Pose> poses;
  poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double spacing = kTau / std::max(1, count);
    const double theta = spacing * (i + angle_offset) +
                         rng.uniform(-0.3, 0.3) * spacing;
    const double radius = rng.uniform(cfg.orbit_radius_min_m, cfg.orbit_radius_max_m);
    const double height =
        rng.uniform(-cfg.orbit_height_jitter_m, cfg.orbit_height_jitter_m);
    const double roll = rng.uniform(-0.17, 0.17);
    const Eigen::Vector3d pos =
        center + Eigen::Vector3d(radius * std::cos(theta),
                                 radius * std::sin(theta), height);
    poses.push_back(look_at_pose(pos, center, roll));
  }
  return poses;
}

// Exit intersection of a ray starting inside the cube room; returns the hit
// surface index and world point.
struct WallHit {
  int surface = -1;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

WallHit intersect_room(const SceneConfig& cfg, const Eigen::Vector3d& center,
                       const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const double h = cfg.room_half_extent_m;
  const int n = cfg.tiles_per_edge;
  const Eigen::Vector3d o = origin - center;

  double best_t = std::numeric_limits<double>::infinity();
  int best_axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) continue;
    const double wall = dir[a] > 0 ? h : -h;
    const double t = (wall - o[a]) / dir[a];
    if (t > 0 && t < best_t) {
      best_t = t;
      best_axis = a;
    }
  }
  WallHit hit;
  if (best_axis < 0) return hit;

  const Eigen::Vector3d p = o + best_t * dir;
  const int face = best_axis * 2 + (dir[best_axis] > 0 ? 0 : 1);
  const FaceFrame ff = face_frame(face);
  const double tile = 2.0 * h / n;
  auto tile_index = [&](double coord) {
    const int idx = static_cast<int>(std::floor((coord + h) / tile));
    return std::clamp(idx, 0, n - 1);
  };
  const int i = tile_index(p[ff.u_axis]);
  const int j = tile_index(p[ff.v_axis]);
  hit.surface = face * n * n + i * n + j;
  hit.point = center + p;
  return hit;
}

float clamp01(double v) {
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

FeatureGrid render_grid(const SceneConfig& cfg, const SyntheticScene& scene,
                        int frame_id, const Pose& pose, Rng& rng) {
  FeatureGrid grid;
  grid.frame_id = frame_id;
  grid.resize((cfg.image_height + kPatchPx - 1) / kPatchPx,
              (cfg.image_width + kPatchPx - 1) / kPatchPx, kFeatureDim);
  const std::array<Eigen::Vector3d, 6> anchors =
      textureless_anchors(scene.surfaces);
  const int per_face = static_cast<int>(scene.surfaces.size()) / 6;

  const CameraIntrinsics& k = scene.intrinsics;
  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      const int cell = grid.cell_index(row, col);
      const double u_lo = col * kPatchPx;
      const double u_hi = std::min<double>(u_lo + kPatchPx, cfg.image_width);
      const double v_lo = row * kPatchPx;
      const double v_hi = std::min<double>(v_lo + kPatchPx, cfg.image_height);
      const double u = 0.5 * (u_lo + u_hi - 1.0);
      const double v = 0.5 * (v_lo + v_hi - 1.0);

      const Eigen::Vector3d dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d dir = pose.rotation * dir_cam;
      const WallHit hit =
          intersect_room(cfg, scene.scene_center, pose.translation, dir);
      if (hit.surface < 0) throw std::logic_error("ray missed the room");
      const Surface& surf = scene.surfaces[hit.surface];

      grid.pixels[cell * 2] = static_cast<float>(u);
      grid.pixels[cell * 2 + 1] = static_cast<float>(v);
      for (int d = 0; d < 3; ++d)
        grid.gt_coords[cell * 3 + d] = static_cast<float>(hit.point[d]);
      grid.labels[cell] = static_cast<uint8_t>(surf.label);
      for (int d = 0; d < 3; ++d) {
        grid.appearance[cell * 3 + d] = clamp01(
            surf.appearance[d] + rng.normal(0.0, cfg.appearance_noise_sigma));
      }

      // Feature source point: the observed world point for static texture,
      // the surface centroid for texture-less tiles (position becomes
      // unrecoverable), and the body-fixed content point for dynamic tiles
      // (feature <-> world position becomes inconsistent across frames).
      Eigen::Vector3d source = hit.point;
      if (surf.label == RegionLabel::kTextureLess) {
        source = anchors[surf.id / per_face];
      } else if (surf.label == RegionLabel::kDynamic) {
        const auto& traj = scene.dynamic_trajectories.at(surf.id)[frame_id];
        const Eigen::Matrix3d r = quaternion_wxyz_to_rotation(traj.q_wxyz);
        source = r.transpose() * (hit.point - traj.t);
      }
      const Eigen::VectorXd enc = scene.encoding.encode(source);
      for (int d = 0; d < kFeatureDim; ++d) {
        grid.features[cell * kFeatureDim + d] = static_cast<float>(
            enc(d) + rng.normal(0.0, cfg.feature_noise_sigma));
      }
    }
  }
  return grid;
}

}  // namespace

Dataset generate_scene(const SceneConfig& config) {
  config.validate();
  Rng rng = Rng::stream(config.seed, "scene");

  Dataset ds;
  SyntheticScene& scene = ds.scene;
  scene.rng_seed = config.seed;
  scene.scene_center = Eigen::Vector3d::Zero();
  scene.intrinsics = {config.focal_px,
                      config.focal_px,
                      config.image_width / 2.0,
                      config.image_height / 2.0,
                      config.image_width,
                      config.image_height};

  scene.encoding = make_encoding(rng);
  scene.surfaces = make_tiled_room(config, scene.scene_center, rng);
  const int n_frames = config.n_train_frames + config.n_test_frames;
  scene.dynamic_trajectories =
      make_trajectories(config, scene.surfaces, n_frames, rng);

  const std::vector<Pose> train_poses =
      make_orbit_poses(config, scene.scene_center, config.n_train_frames, 0.0, rng);
  const std::vector<Pose> test_poses =
      make_orbit_poses(config, scene.scene_center, config.n_test_frames, 0.5, rng);

  for (int i = 0; i < config.n_train_frames; ++i)
    scene.train_frames.push_back(i);
  for (int i = 0; i < config.n_test_frames; ++i)
    scene.test_frames.push_back(config.n_train_frames + i);

  for (int i = 0; i < config.n_train_frames; ++i) {
    Frame f;
    f.frame_id = i;
    f.pose_gt = train_poses[i];
    f.intrinsics = scene.intrinsics;
    f.grid = render_grid(config, scene, f.frame_id, f.pose_gt, rng);
    ds.train.push_back(std::move(f));
  }
  for (int i = 0; i < config.n_test_frames; ++i) {
    Frame f;
    f.frame_id = config.n_train_frames + i;
    f.pose_gt = test_poses[i];
    f.intrinsics = scene.intrinsics;
    f.grid = render_grid(config, scene, f.frame_id, f.pose_gt, rng);
    ds.test.push_back(std::move(f));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset directory format
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kGridVersion = 1;
constexpr int kSceneSchemaVersion = 1;

ordered_json vec_to_json(const Eigen::Vector3d& v) {
  return ordered_json{v.x(), v.y(), v.z()};
}

Eigen::Vector3d json_to_vec3(const ordered_json& j) {
  if (!j.is_array() || j.size() != 3) throw SchemaError("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<uint8_t> encode_grid(const FeatureGrid& g) {
  std::vector<uint8_t> buf;
  buf.reserve(16 + static_cast<size_t>(g.cell_count()) * (g.dim + 8) * 4 + 16);
  buf.insert(buf.end(), {'E', 'G', 'F', 'S'});
  append_u32(buf, kGridVersion);
  append_u32(buf, static_cast<uint32_t>(g.rows));
  append_u32(buf, static_cast<uint32_t>(g.cols));
  append_u32(buf, static_cast<uint32_t>(g.dim));
  for (int cell = 0; cell < g.cell_count(); ++cell) {
    for (int d = 0; d < g.dim; ++d) append_f32(buf, g.features[cell * g.dim + d]);
    for (int d = 0; d < 3; ++d) append_f32(buf, g.appearance[cell * 3 + d]);
    for (int d = 0; d < 3; ++d) append_f32(buf, g.gt_coords[cell * 3 + d]);
    buf.push_back(g.labels[cell]);
    for (int d = 0; d < 2; ++d) append_f32(buf, g.pixels[cell * 2 + d]);
  }
  return buf;
}

FeatureGrid decode_grid(const std::vector<uint8_t>& buf, int frame_id) {
  size_t off = 0;
  if (buf.size() < 4 || buf[0] != 'E' || buf[1] != 'G' || buf[2] != 'F' ||
      buf[3] != 'S')
    throw SchemaError("grid file: bad magic");
  off = 4;
  const uint32_t version = read_u32(buf, off);
  if (version != kGridVersion)
    throw SchemaError("grid file: unsupported version " + std::to_string(version));
  FeatureGrid g;
  g.frame_id = frame_id;
  const uint32_t rows = read_u32(buf, off);
  const uint32_t cols = read_u32(buf, off);
  const uint32_t dim = read_u32(buf, off);
  if (rows == 0 || cols == 0 || dim == 0 || rows > 1 << 16 || cols > 1 << 16 ||
      dim > 1 << 16)
    throw SchemaError("grid file: implausible dimensions");
  g.resize(static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(dim));
  for (int cell = 0; cell < g.cell_count(); ++cell) {
    for (uint32_t d = 0; d < dim; ++d)
      g.features[cell * dim + d] = read_f32(buf, off);
    for (int d = 0; d < 3; ++d) g.appearance[cell * 3 + d] = read_f32(buf, off);
    for (int d = 0; d < 3; ++d) g.gt_coords[cell * 3 + d] = read_f32(buf, off);
    const uint8_t label = read_u8(buf, off);
    if (label > 2) throw SchemaError("grid file: bad label value");
    g.labels[cell] = label;
    for (int d = 0; d < 2; ++d) g.pixels[cell * 2 + d] = read_f32(buf, off);
  }
  if (off != buf.size()) throw SchemaError("grid file: trailing bytes");
  return g;
}

std::string encode_poses(const Dataset& ds) {
  std::string out;
  auto emit = [&out](const Frame& f) {
    Eigen::Vector4d q = rotation_to_quaternion_wxyz(f.pose_gt.rotation);
    if (q(0) < 0) q = -q;  // canonical sign for stable output
    char line[256];
    std::snprintf(line, sizeof(line),
                  "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", f.frame_id,
                  q(0), q(1), q(2), q(3), f.pose_gt.translation.x(),
                  f.pose_gt.translation.y(), f.pose_gt.translation.z());
    out += line;
  };
  for (const auto& f : ds.train) emit(f);
  for (const auto& f : ds.test) emit(f);
  return out;
}

std::map<int, Pose> decode_poses(const std::string& text) {
  std::map<int, Pose> poses;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int frame_id;
    double qw, qx, qy, qz, tx, ty, tz;
    if (!(ls >> frame_id >> qw >> qx >> qy >> qz >> tx >> ty >> tz))
      throw SchemaError("poses.txt: malformed line: " + line);
    Pose p;
    p.rotation = quaternion_wxyz_to_rotation({qw, qx, qy, qz});
    p.translation = {tx, ty, tz};
    poses[frame_id] = p;
  }
  return poses;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "grids");

  const SyntheticScene& scene = ds.scene;
  ordered_json j;
  j["schema_version"] = kSceneSchemaVersion;
  j["seed"] = scene.rng_seed;
  j["scene_center"] = vec_to_json(scene.scene_center);
  j["patch_px"] = kPatchPx;
  j["feature_dim"] = kFeatureDim;
  j["intrinsics"] = {{"fx", scene.intrinsics.fx}, {"fy", scene.intrinsics.fy},
                     {"cx", scene.intrinsics.cx}, {"cy", scene.intrinsics.cy},
                     {"width", scene.intrinsics.width},
                     {"height", scene.intrinsics.height}};
  j["train_frames"] = scene.train_frames;
  j["test_frames"] = scene.test_frames;

  ordered_json enc;
  enc["omega"] = ordered_json::array();
  for (Eigen::Index r = 0; r < scene.encoding.omega.rows(); ++r)
    enc["omega"].push_back(ordered_json{scene.encoding.omega(r, 0),
                                        scene.encoding.omega(r, 1),
                                        scene.encoding.omega(r, 2)});
  enc["phase"] = std::vector<double>(
      scene.encoding.phase.data(),
      scene.encoding.phase.data() + scene.encoding.phase.size());
  j["encoding"] = enc;

  j["surfaces"] = ordered_json::array();
  for (const auto& s : scene.surfaces) {
    ordered_json js;
    js["id"] = s.id;
    js["label"] = region_label_name(s.label);
    js["appearance"] = vec_to_json(s.appearance);
    js["corners"] = ordered_json::array();
    for (const auto& c : s.corners) js["corners"].push_back(vec_to_json(c));
    j["surfaces"].push_back(js);
  }

  ordered_json traj;
  for (const auto& [id, samples] : scene.dynamic_trajectories) {
    ordered_json list = ordered_json::array();
    for (const auto& s : samples) {
      list.push_back(ordered_json{
          {"q", ordered_json{s.q_wxyz(0), s.q_wxyz(1), s.q_wxyz(2), s.q_wxyz(3)}},
          {"t", vec_to_json(s.t)}});
    }
    traj[std::to_string(id)] = list;
  }
  j["dynamic_trajectories"] = traj;

  write_file_atomic(dir / "scene.json", j.dump(2) + "\n");
  write_file_atomic(dir / "poses.txt", encode_poses(ds));
  auto write_grid = [&dir](const Frame& f) {
    write_file_atomic(dir / "grids" / (std::to_string(f.frame_id) + ".bin"),
                      encode_grid(f.grid));
  };
  for (const auto& f : ds.train) write_grid(f);
  for (const auto& f : ds.test) write_grid(f);
}

Dataset read_dataset(const fs::path& dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(dir / "scene.json"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("scene.json: " + std::string(e.what()));
  }

  Dataset ds;
  SyntheticScene& scene = ds.scene;
  try {
    if (j.at("schema_version").get<int>() != kSceneSchemaVersion)
      throw SchemaError("scene.json: unsupported schema_version");
    scene.rng_seed = j.at("seed").get<uint64_t>();
    scene.scene_center = json_to_vec3(j.at("scene_center"));
    const auto& ji = j.at("intrinsics");
    scene.intrinsics = {ji.at("fx").get<double>(), ji.at("fy").get<double>(),
                        ji.at("cx").get<double>(), ji.at("cy").get<double>(),
                        ji.at("width").get<int>(), ji.at("height").get<int>()};
    if (!scene.intrinsics.valid())
      throw SchemaError("scene.json: invalid intrinsics");
    scene.train_frames = j.at("train_frames").get<std::vector<int>>();
    scene.test_frames = j.at("test_frames").get<std::vector<int>>();

    const auto& je = j.at("encoding");
    const auto& jo = je.at("omega");
    scene.encoding.omega.resize(static_cast<Eigen::Index>(jo.size()), 3);
    for (size_t r = 0; r < jo.size(); ++r) {
      const Eigen::Vector3d row = json_to_vec3(jo[r]);
      scene.encoding.omega.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    const auto phases = je.at("phase").get<std::vector<double>>();
    scene.encoding.phase =
        Eigen::Map<const Eigen::VectorXd>(phases.data(), phases.size());

    for (const auto& js : j.at("surfaces")) {
      Surface s;
      s.id = js.at("id").get<int>();
      s.label = region_label_from_name(js.at("label").get<std::string>());
      s.appearance = json_to_vec3(js.at("appearance"));
      const auto& jc = js.at("corners");
      if (jc.size() != 4) throw SchemaError("surface: expected 4 corners");
      for (int c = 0; c < 4; ++c) s.corners[c] = json_to_vec3(jc[c]);
      scene.surfaces.push_back(s);
    }

    for (const auto& [key, list] : j.at("dynamic_trajectories").items()) {
      std::vector<TrajectorySample> samples;
      for (const auto& js : list) {
        TrajectorySample s;
        const auto& jq = js.at("q");
        if (jq.size() != 4) throw SchemaError("trajectory: expected quaternion");
        for (int d = 0; d < 4; ++d) s.q_wxyz(d) = jq[d].get<double>();
        s.t = json_to_vec3(js.at("t"));
        samples.push_back(s);
      }
      scene.dynamic_trajectories[std::stoi(key)] = std::move(samples);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("scene.json: " + std::string(e.what()));
  }

  const std::map<int, Pose> poses = decode_poses(read_file(dir / "poses.txt"));
  auto load_frame = [&](int frame_id) {
    auto it = poses.find(frame_id);
    if (it == poses.end())
      throw SchemaError("poses.txt: missing frame " + std::to_string(frame_id));
    Frame f;
    f.frame_id = frame_id;
    f.pose_gt = it->second;
    f.intrinsics = scene.intrinsics;
    f.grid = decode_grid(
        read_file_bytes(dir / "grids" / (std::to_string(frame_id) + ".bin")),
        frame_id);
    return f;
  };
  for (int id : scene.train_frames) ds.train.push_back(load_frame(id));
  for (int id : scene.test_frames) ds.test.push_back(load_frame(id));
  return ds;
}

}  // namespace egfs

#include "egfs/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "egfs/io_util.hpp"

namespace egfs {

namespace {

constexpr double kLogEps = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr double kValidDepthMax = 1000.0;  // m
constexpr double kValidErrorMax = 1000.0;  // px
constexpr double kValidRangeFactor = 10.0;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (alpha <= 0) bad("alpha must be > 0");
  if (tau_prompt_pct <= 0 || tau_prompt_pct > 100)
    bad("tau_prompt_pct must be in (0, 100]");
  if (epochs_total <= 0) bad("epochs_total must be > 0");
  if (epochs_per_iteration <= 0 || epochs_total % epochs_per_iteration != 0)
    bad("epochs_total must be divisible by epochs_per_iteration");
  if (learning_rate <= 0) bad("learning_rate must be > 0");
  if (lr_decay < 0 || lr_decay > 1) bad("lr_decay must be in [0, 1]");
  if (batch_size <= 0) bad("batch_size must be > 0");
  if (clamp_w_max_px < clamp_w_min_px || clamp_w_min_px <= 0)
    bad("clamp widths must satisfy 0 < w_min <= w_max");
}

RegressorParams RegressorParams::init(int feature_dim,
                                      const Eigen::Vector3d& center,
                                      double radius, Rng& rng) {
  RegressorParams p;
  p.scene_center = center;
  p.scene_radius = radius;

  auto he_layer = [&rng, &p](int rows, int cols) {
    Eigen::MatrixXd w(rows, cols);
    const double std = std::sqrt(2.0 / cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = rng.normal(0.0, std);
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(Eigen::MatrixXd::Zero(rows, 1));
  };

  he_layer(kTrunkWidth, feature_dim);
  for (int l = 1; l < kTrunkLayers; ++l) he_layer(kTrunkWidth, kTrunkWidth);
  he_layer(3, kTrunkWidth);           // coordinate head
  he_layer(kConfHidden, kTrunkWidth); // confidence hidden
  he_layer(1, kConfHidden);           // confidence logit
  return p;
}

bool RegressorParams::finite() const {
  for (const auto& t : tensors)
    if (!t.allFinite()) return false;
  return scene_center.allFinite() && std::isfinite(scene_radius);
}

namespace {

/// Forward pass keeping intermediates for backprop. Activations are columns.
struct ForwardTrace {
  Eigen::MatrixXd x;
  std::vector<Eigen::MatrixXd> trunk;  // post-ReLU activations per layer
  Eigen::MatrixXd conf_hidden;         // post-ReLU
  Eigen::Matrix3Xd y;
  Eigen::RowVectorXd logit;
  Eigen::RowVectorXd c;
};

ForwardTrace run_forward(const RegressorParams& p, Eigen::MatrixXd features) {
  ForwardTrace f;
  f.x = std::move(features);
  const Eigen::Index b = f.x.cols();

  const Eigen::MatrixXd* a = &f.x;
  f.trunk.reserve(kTrunkLayers);
  for (int l = 0; l < kTrunkLayers; ++l) {
    Eigen::MatrixXd z = (p.tensors[2 * l] * (*a)).colwise() +
                        Eigen::VectorXd(p.tensors[2 * l + 1].col(0));
    f.trunk.push_back(z.cwiseMax(0.0));
    a = &f.trunk.back();
  }
  const Eigen::MatrixXd& top = f.trunk.back();

  const int ci = 2 * kTrunkLayers;
  f.y = (p.tensors[ci] * top).colwise() +
        Eigen::VectorXd(p.tensors[ci + 1].col(0) + p.scene_center);

  const int f1 = ci + 2, f2 = ci + 4;
  f.conf_hidden = ((p.tensors[f1] * top).colwise() +
                   Eigen::VectorXd(p.tensors[f1 + 1].col(0)))
                      .cwiseMax(0.0);
  f.logit = (p.tensors[f2] * f.conf_hidden).row(0).array() +
            p.tensors[f2 + 1](0, 0);
  f.c.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) f.c(i) = sigmoid(f.logit(i));
  return f;
}

}  // namespace

ForwardBatch forward_batch(const RegressorParams& params,
                           const Eigen::MatrixXd& features) {
  if (!features.allFinite())
    throw std::invalid_argument("forward: non-finite feature");
  ForwardTrace f = run_forward(params, features);
  return {std::move(f.y), std::move(f.c)};
}

Prediction forward(const RegressorParams& params,
                   const Eigen::VectorXd& feature) {
  const ForwardBatch out = forward_batch(params, feature);
  return {out.y.col(0), out.c(0), true};
}

bool prediction_valid(const SceneCoordinate& y, const PixelPoint& pixel,
                      const Pose& pose_gt, const CameraIntrinsics& k,
                      const Eigen::Vector3d& scene_center,
                      double scene_radius) {
  const Eigen::Vector3d yc =
      pose_gt.rotation.transpose() * (y - pose_gt.translation);
  if (yc.z() < kMinDepth || yc.z() > kValidDepthMax) return false;
  const PixelPoint proj(k.fx * yc.x() / yc.z() + k.cx,
                        k.fy * yc.y() / yc.z() + k.cy);
  if ((proj - pixel).norm() >= kValidErrorMax) return false;
  return (y - scene_center).norm() < scene_radius * kValidRangeFactor;
}

double clamp_schedule(double t, const TrainConfig& cfg) {
  return cfg.clamp_w_max_px * (1.0 - t) + cfg.clamp_w_min_px * t;
}

double clamped_error(double r, double w) { return w * std::tanh(r / w); }

LossResult loss_and_grad(const RegressorParams& params,
                         const std::vector<Frame>& frames,
                         std::span<const BufferEntry> batch, double t,
                         const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");

  // Canonical (frame_id, cell) reduction order: the result does not depend
  // on the caller's batch ordering.
  std::vector<BufferEntry> order(batch.begin(), batch.end());
  std::sort(order.begin(), order.end(),
            [&frames](const BufferEntry& a, const BufferEntry& b) {
              const int fa = frames[a.frame_idx].frame_id;
              const int fb = frames[b.frame_idx].frame_id;
              return fa != fb ? fa < fb : a.cell < b.cell;
            });

  const int n = static_cast<int>(order.size());
  const int dim = params.input_dim();
  Eigen::MatrixXd x(dim, n);
  for (int i = 0; i < n; ++i) {
    const FeatureGrid& grid = frames[order[i].frame_idx].grid;
    const float* f = grid.feature(order[i].cell);
    for (int d = 0; d < dim; ++d) x(d, i) = f[d];
  }
  if (!x.allFinite())
    throw std::invalid_argument("loss_and_grad: non-finite feature");

  ForwardTrace fwd = run_forward(params, std::move(x));
  const double w = clamp_schedule(t, cfg);
  const double inv_n = 1.0 / n;

  Eigen::Matrix3Xd g_y = Eigen::Matrix3Xd::Zero(3, n);
  Eigen::RowVectorXd g_logit = Eigen::RowVectorXd::Zero(n);
  double loss_sum = 0;
  int valid_count = 0;

  for (int i = 0; i < n; ++i) {
    const Frame& frame = frames[order[i].frame_idx];
    const FeatureGrid& grid = frame.grid;
    const PixelPoint pixel = grid.pixel(order[i].cell);
    const CameraIntrinsics& k = frame.intrinsics;
    const Eigen::Matrix3d r_cw = frame.pose_gt.rotation.transpose();
    const Eigen::Vector3d y = fwd.y.col(i);
    const double c = fwd.c(i);
    const Eigen::Vector3d yc = r_cw * (y - frame.pose_gt.translation);

    bool valid = yc.z() >= kMinDepth && yc.z() <= kValidDepthMax;
    double u = 0, v = 0, r = 0;
    if (valid) {
      u = k.fx * yc.x() / yc.z() + k.cx;
      v = k.fy * yc.y() / yc.z() + k.cy;
      const double du = u - pixel.x(), dv = v - pixel.y();
      r = std::sqrt(du * du + dv * dv);
      valid = r < kValidErrorMax &&
              (y - params.scene_center).norm() <
                  params.scene_radius * kValidRangeFactor;
    }

    if (valid) {
      ++valid_count;
      const double th = std::tanh(r / w);
      const double r_hat = w * th;
      double dl_drhat;
      if (cfg.confidence_on) {
        loss_sum += c * r_hat - cfg.alpha * std::log(c + kLogEps);
        dl_drhat = c;
        const double dl_dc = r_hat - cfg.alpha / (c + kLogEps);
        g_logit(i) = dl_dc * c * (1.0 - c) * inv_n;
      } else {
        loss_sum += r_hat;
        dl_drhat = 1.0;
      }
      if (r >= 1e-12) {
        const double drhat_dr = 1.0 - th * th;
        const double du_n = (u - pixel.x()) / r, dv_n = (v - pixel.y()) / r;
        // d(u,v)/d(y_cam), then back to world through R_cw.
        Eigen::Vector3d de_dyc(
            k.fx / yc.z() * du_n, k.fy / yc.z() * dv_n,
            -(k.fx * yc.x() * du_n + k.fy * yc.y() * dv_n) / (yc.z() * yc.z()));
        g_y.col(i) = dl_drhat * drhat_dr * inv_n * (r_cw.transpose() * de_dyc);
      }
    } else {
      const SceneCoordinate dummy = dummy_coordinate(pixel, frame.pose_gt, k);
      const Eigen::Vector3d diff = y - dummy;
      const double dist = diff.norm();
      loss_sum += dist;
      if (cfg.confidence_on) {
        loss_sum += -cfg.alpha * std::log(1.0 - c + kLogEps);
        const double dl_dc = cfg.alpha / (1.0 - c + kLogEps);
        g_logit(i) = dl_dc * c * (1.0 - c) * inv_n;
      }
      if (dist >= 1e-12) g_y.col(i) = (diff / dist) * inv_n;
    }
  }

  // Backward pass.
  LossResult result;
  result.loss = loss_sum * inv_n;
  result.valid_fraction = static_cast<double>(valid_count) * inv_n;
  result.grad.resize(params.tensors.size());

  const Eigen::MatrixXd& top = fwd.trunk.back();
  const int ci = 2 * kTrunkLayers, f1 = ci + 2, f2 = ci + 4;

  result.grad[ci] = g_y * top.transpose();
  result.grad[ci + 1] = g_y.rowwise().sum();
  Eigen::MatrixXd g_top = params.tensors[ci].transpose() * g_y;

  result.grad[f2] = g_logit * fwd.conf_hidden.transpose();
  result.grad[f2 + 1] = Eigen::MatrixXd::Constant(1, 1, g_logit.sum());
  Eigen::MatrixXd g_hidden =
      (params.tensors[f2].transpose() * g_logit)
          .cwiseProduct((fwd.conf_hidden.array() > 0.0).cast<double>().matrix());
  result.grad[f1] = g_hidden * top.transpose();
  result.grad[f1 + 1] = g_hidden.rowwise().sum();
  g_top += params.tensors[f1].transpose() * g_hidden;

  Eigen::MatrixXd g_a = std::move(g_top);
  for (int l = kTrunkLayers - 1; l >= 0; --l) {
    const Eigen::MatrixXd g_z = g_a.cwiseProduct(
        (fwd.trunk[l].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd& below = (l == 0) ? fwd.x : fwd.trunk[l - 1];
    result.grad[2 * l] = g_z * below.transpose();
    result.grad[2 * l + 1] = g_z.rowwise().sum();
    if (l > 0) g_a = params.tensors[2 * l].transpose() * g_z;
  }
  return result;
}

AdamState AdamState::init_like(const ParamTensors& tensors) {
  AdamState s;
  for (const auto& t : tensors) {
    s.m.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    s.v.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  }
  return s;
}

void AdamState::update(ParamTensors& tensors, const ParamTensors& grad,
                       double lr) {
  ++step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  for (size_t i = 0; i < tensors.size(); ++i) {
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
    v[i] = kAdamBeta2 * v[i].array().matrix() +
           (1.0 - kAdamBeta2) * grad[i].cwiseProduct(grad[i]);
    tensors[i].array() -=
        lr * (m[i].array() / bc1) /
        ((v[i].array() / bc2).sqrt() + kAdamEps);
  }
}

EpochStats train_epoch(RegressorParams& params, const TrainingBuffer& buffer,
                       double t_begin, double t_end, const TrainConfig& cfg,
                       AdamState& adam, Rng& rng) {
  if (buffer.entries.empty())
    throw std::invalid_argument("train_epoch: empty buffer");
  const std::vector<Frame>& frames = *buffer.frames;

  std::vector<int> idx(buffer.entries.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  rng.shuffle(idx);

  const int n = static_cast<int>(idx.size());
  const int n_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  double loss_weighted = 0, valid_weighted = 0;
  std::vector<BufferEntry> batch;
  for (int b = 0; b < n_batches; ++b) {
    const int lo = b * cfg.batch_size;
    const int hi = std::min(n, lo + cfg.batch_size);
    batch.clear();
    for (int i = lo; i < hi; ++i) batch.push_back(buffer.entries[idx[i]]);
    const double t =
        t_begin + (t_end - t_begin) * (static_cast<double>(b) / n_batches);
    LossResult res = loss_and_grad(params, frames, batch, t, cfg);
    adam.update(params.tensors, res.grad,
                cfg.learning_rate * (1.0 - cfg.lr_decay * t));
    loss_weighted += res.loss * (hi - lo);
    valid_weighted += res.valid_fraction * (hi - lo);
  }
  return {loss_weighted / n, valid_weighted / n};
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

namespace {
constexpr uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::filesystem::path& path,
                     const RegressorParams& params) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), {'E', 'G', 'F', 'S', 'W'});
  append_u32(buf, kCheckpointVersion);
  ParamTensors all = params.tensors;
  all.push_back(params.scene_center);
  all.push_back(Eigen::MatrixXd::Constant(1, 1, params.scene_radius));
  append_u32(buf, static_cast<uint32_t>(all.size()));
  for (const auto& t : all) {
    append_u32(buf, static_cast<uint32_t>(t.rows()));
    append_u32(buf, static_cast<uint32_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        append_f32(buf, static_cast<float>(t(r, c)));
  }
  write_file_atomic(path, buf);
}

RegressorParams load_checkpoint(const std::filesystem::path& path) {
  const std::vector<uint8_t> buf = read_file_bytes(path);
  if (buf.size() < 5 || buf[0] != 'E' || buf[1] != 'G' || buf[2] != 'F' ||
      buf[3] != 'S' || buf[4] != 'W')
    throw SchemaError("checkpoint: bad magic");
  size_t off = 5;
  const uint32_t version = read_u32(buf, off);
  if (version != kCheckpointVersion)
    throw SchemaError("checkpoint: unsupported version");
  const uint32_t count = read_u32(buf, off);
  const uint32_t expected = 2 * (kTrunkLayers + 3) + 2;
  if (count != expected) throw SchemaError("checkpoint: unexpected tensor count");

  ParamTensors all;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t rows = read_u32(buf, off);
    const uint32_t cols = read_u32(buf, off);
    if (rows == 0 || cols == 0 || rows > 1 << 16 || cols > 1 << 16)
      throw SchemaError("checkpoint: implausible tensor shape");
    Eigen::MatrixXd t(rows, cols);
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) t(r, c) = read_f32(buf, off);
    all.push_back(std::move(t));
  }
  if (off != buf.size()) throw SchemaError("checkpoint: trailing bytes");

  RegressorParams params;
  if (all[count - 2].rows() != 3 || all[count - 2].cols() != 1 ||
      all[count - 1].rows() != 1 || all[count - 1].cols() != 1)
    throw SchemaError("checkpoint: bad trailing scene tensors");
  params.scene_center = all[count - 2].col(0);
  params.scene_radius = all[count - 1](0, 0);
  all.resize(count - 2);
  params.tensors = std::move(all);
  if (params.tensors[0].rows() != kTrunkWidth)
    throw SchemaError("checkpoint: unexpected trunk width");
  return params;
}

}  // namespace egfs

#include "egfs/selection.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <sstream>

#include "egfs/io_util.hpp"
#include "egfs/stats.hpp"

namespace egfs {

int ErrorMap::valid_count() const {
  int n = 0;
  for (uint8_t v : valid) n += v;
  return n;
}

int EgfsMask::count() const {
  int n = 0;
  for (uint8_t v : selected) n += v;
  return n;
}

FramePrediction predict_frame(const RegressorParams& params,
                              const Frame& frame) {
  const FeatureGrid& grid = frame.grid;
  const int n = grid.cell_count();
  Eigen::MatrixXd x(grid.dim, n);
  for (int cell = 0; cell < n; ++cell) {
    const float* f = grid.feature(cell);
    for (int d = 0; d < grid.dim; ++d) x(d, cell) = f[d];
  }
  ForwardBatch out = forward_batch(params, x);
  return {std::move(out.y), std::move(out.c)};
}

ErrorMap error_map_from_predictions(const Frame& frame,
                                    const Eigen::Matrix3Xd& y) {
  const FeatureGrid& grid = frame.grid;
  ErrorMap em;
  em.frame_id = frame.frame_id;
  em.rows = grid.rows;
  em.cols = grid.cols;
  em.error.assign(grid.cell_count(), 0.0);
  em.valid.assign(grid.cell_count(), 0);
  for (int cell = 0; cell < grid.cell_count(); ++cell) {
    const auto err = reprojection_error(grid.pixel(cell), y.col(cell),
                                        frame.pose_gt, frame.intrinsics);
    if (err) {
      em.error[cell] = *err;
      em.valid[cell] = 1;
    }
  }
  return em;
}

std::vector<ErrorMap> compute_error_maps(const RegressorParams& params,
                                         const std::vector<Frame>& frames) {
  std::vector<ErrorMap> maps;
  maps.reserve(frames.size());
  for (const auto& frame : frames) {
    maps.push_back(
        error_map_from_predictions(frame, predict_frame(params, frame).y));
  }
  return maps;
}

std::vector<std::vector<double>> compute_confidence_grids(
    const RegressorParams& params, const std::vector<Frame>& frames) {
  std::vector<std::vector<double>> grids;
  grids.reserve(frames.size());
  for (const auto& frame : frames) {
    const FramePrediction pred = predict_frame(params, frame);
    grids.emplace_back(pred.c.data(), pred.c.data() + pred.c.size());
  }
  return grids;
}

PromptSet select_prompts(const ErrorMap& em, double tau_pct) {
  PromptSet prompts;
  prompts.frame_id = em.frame_id;
  std::vector<PromptCell> valid;
  for (int row = 0; row < em.rows; ++row) {
    for (int col = 0; col < em.cols; ++col) {
      const int cell = row * em.cols + col;
      if (em.valid[cell]) valid.push_back({row, col, em.error[cell]});
    }
  }
  if (valid.empty()) return prompts;  // frame skipped this iteration

  std::sort(valid.begin(), valid.end(),
            [](const PromptCell& a, const PromptCell& b) {
              if (a.error != b.error) return a.error < b.error;
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });
  const size_t take = static_cast<size_t>(
      std::ceil(tau_pct / 100.0 * static_cast<double>(valid.size())));
  valid.resize(std::min(valid.size(), std::max<size_t>(take, 1)));
  prompts.cells = std::move(valid);
  return prompts;
}

namespace {

EgfsMask empty_mask_like(const Frame& frame) {
  EgfsMask mask;
  mask.frame_id = frame.frame_id;
  mask.rows = frame.grid.rows;
  mask.cols = frame.grid.cols;
  mask.selected.assign(frame.grid.cell_count(), 0);
  return mask;
}

constexpr int kNeighborOffsets[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

}  // namespace

EgfsMask GrowExpander::expand(const PromptSet& prompts,
                              const Frame& frame) const {
  EgfsMask mask = empty_mask_like(frame);
  mask.expander_id = id();
  const FeatureGrid& grid = frame.grid;

  std::vector<uint8_t> in_region(grid.cell_count());
  for (const PromptCell& prompt : prompts.cells) {
    // Each prompt grows its own region; the mask is the union.
    std::fill(in_region.begin(), in_region.end(), 0);
    std::deque<std::pair<int, int>> queue;
    const int start = grid.cell_index(prompt.row, prompt.col);
    in_region[start] = 1;
    queue.emplace_back(prompt.row, prompt.col);
    Eigen::Vector3d sum = grid.appearance_at(start).cast<double>();
    int count = 1;

    while (!queue.empty()) {
      const auto [row, col] = queue.front();
      queue.pop_front();
      for (const auto& off : kNeighborOffsets) {
        const int nr = row + off[0], nc = col + off[1];
        if (nr < 0 || nr >= grid.rows || nc < 0 || nc >= grid.cols) continue;
        const int cell = grid.cell_index(nr, nc);
        if (in_region[cell]) continue;
        const Eigen::Vector3d mean = sum / count;
        const Eigen::Vector3d app = grid.appearance_at(cell).cast<double>();
        if ((app - mean).cwiseAbs().maxCoeff() < tolerance_) {
          in_region[cell] = 1;
          sum += app;
          ++count;
          queue.emplace_back(nr, nc);
        }
      }
    }
    for (int cell = 0; cell < grid.cell_count(); ++cell)
      mask.selected[cell] |= in_region[cell];
  }
  return mask;
}

EgfsMask OracleExpander::expand(const PromptSet& prompts,
                                const Frame& frame) const {
  EgfsMask mask = empty_mask_like(frame);
  mask.expander_id = id();
  const FeatureGrid& grid = frame.grid;

  for (const PromptCell& prompt : prompts.cells) {
    const int start = grid.cell_index(prompt.row, prompt.col);
    if (mask.selected[start]) continue;  // component already traced
    const RegionLabel label = grid.label(start);
    std::deque<std::pair<int, int>> queue;
    mask.selected[start] = 1;
    queue.emplace_back(prompt.row, prompt.col);
    while (!queue.empty()) {
      const auto [row, col] = queue.front();
      queue.pop_front();
      for (const auto& off : kNeighborOffsets) {
        const int nr = row + off[0], nc = col + off[1];
        if (nr < 0 || nr >= grid.rows || nc < 0 || nc >= grid.cols) continue;
        const int cell = grid.cell_index(nr, nc);
        if (mask.selected[cell] || grid.label(cell) != label) continue;
        mask.selected[cell] = 1;
        queue.emplace_back(nr, nc);
      }
    }
  }
  return mask;
}

EgfsMask FileExpander::expand(const PromptSet& prompts,
                              const Frame& frame) const {
  const std::filesystem::path path =
      dir_ / (std::to_string(frame.frame_id) + ".pbm");
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("FileExpander: missing mask for frame " +
                             std::to_string(frame.frame_id) + " (" +
                             path.string() + ")");
  }
  EgfsMask loaded = mask_from_pbm(read_file(path));
  if (loaded.rows != frame.grid.rows || loaded.cols != frame.grid.cols) {
    throw std::runtime_error("FileExpander: mask shape mismatch for frame " +
                             std::to_string(frame.frame_id));
  }
  loaded.frame_id = frame.frame_id;

  // Keep only 4-connected components that contain a prompt.
  EgfsMask mask = empty_mask_like(frame);
  mask.expander_id = id();
  for (const PromptCell& prompt : prompts.cells) {
    const int start = prompt.row * loaded.cols + prompt.col;
    if (!loaded.selected[start] || mask.selected[start]) continue;
    std::deque<std::pair<int, int>> queue;
    mask.selected[start] = 1;
    queue.emplace_back(prompt.row, prompt.col);
    while (!queue.empty()) {
      const auto [row, col] = queue.front();
      queue.pop_front();
      for (const auto& off : kNeighborOffsets) {
        const int nr = row + off[0], nc = col + off[1];
        if (nr < 0 || nr >= loaded.rows || nc < 0 || nc >= loaded.cols) continue;
        const int cell = nr * loaded.cols + nc;
        if (mask.selected[cell] || !loaded.selected[cell]) continue;
        mask.selected[cell] = 1;
        queue.emplace_back(nr, nc);
      }
    }
  }
  return mask;
}

std::unique_ptr<RegionExpander> make_expander(
    const std::string& kind, double appearance_tolerance,
    const std::filesystem::path& dir) {
  if (kind == "grow") return std::make_unique<GrowExpander>(appearance_tolerance);
  if (kind == "oracle") return std::make_unique<OracleExpander>();
  if (kind == "file") return std::make_unique<FileExpander>(dir);
  throw std::invalid_argument("unknown expander: " + kind);
}

EgfsMask refine_with_confidence(const EgfsMask& mask,
                                const std::vector<double>& confidence,
                                const ErrorMap& em) {
  std::vector<double> valid_conf;
  for (int cell = 0; cell < em.cell_count(); ++cell)
    if (em.valid[cell]) valid_conf.push_back(confidence[cell]);
  if (valid_conf.empty()) return mask;

  const double sigma = median_interpolated(std::move(valid_conf));
  EgfsMask refined = mask;
  for (size_t cell = 0; cell < refined.selected.size(); ++cell)
    refined.selected[cell] =
        static_cast<uint8_t>(mask.selected[cell] && confidence[cell] >= sigma);
  if (refined.count() == 0) {
    std::cerr << "refine_with_confidence: empty result for frame "
              << mask.frame_id << "; keeping unrefined mask\n";
    return mask;
  }
  return refined;
}

namespace {

size_t dataset_cell_count(const std::vector<Frame>& frames) {
  size_t n = 0;
  for (const auto& f : frames) n += f.grid.cell_count();
  return n;
}

/// Buffers have a fixed target size (every patch of the dataset, capped at
/// kBufferCapacity) regardless of how many cells the sampler kept: a pool
/// smaller than the target is upsampled with replacement, a larger one is
/// uniformly subsampled. Selection changes what is trained on, not for how
/// many steps.
TrainingBuffer finalize_buffer(const std::vector<Frame>& frames,
                               std::vector<BufferEntry> pool, Rng& rng) {
  const size_t target = std::min(kBufferCapacity, dataset_cell_count(frames));
  TrainingBuffer buffer;
  buffer.frames = &frames;
  rng.shuffle(pool);
  if (pool.size() <= target) {
    buffer.entries = pool;
    while (buffer.entries.size() < target)
      buffer.entries.push_back(pool[rng.uniform_int(pool.size())]);
  } else {
    pool.resize(target);
    buffer.entries = std::move(pool);
  }
  return buffer;
}

}  // namespace

TrainingBuffer build_buffer_random_all(const std::vector<Frame>& frames,
                                       Rng& rng) {
  if (frames.empty())
    throw std::invalid_argument("build_buffer: no frames");
  std::vector<BufferEntry> entries;
  for (int fi = 0; fi < static_cast<int>(frames.size()); ++fi)
    for (int cell = 0; cell < frames[fi].grid.cell_count(); ++cell)
      entries.push_back({fi, cell});
  return finalize_buffer(frames, std::move(entries), rng);
}

TrainingBuffer build_buffer_masked(const std::vector<Frame>& frames,
                                   const std::vector<EgfsMask>& masks,
                                   Rng& rng) {
  if (frames.empty())
    throw std::invalid_argument("build_buffer: no frames");
  std::vector<BufferEntry> entries;
  for (int fi = 0; fi < static_cast<int>(frames.size()); ++fi) {
    const EgfsMask& mask = masks[fi];
    for (int cell = 0; cell < frames[fi].grid.cell_count(); ++cell)
      if (mask.selected[cell]) entries.push_back({fi, cell});
  }
  if (entries.empty()) {
    std::cerr << "build_buffer: all masks empty; falling back to random-all\n";
    return build_buffer_random_all(frames, rng);
  }
  return finalize_buffer(frames, std::move(entries), rng);
}

double global_error_quantile(const std::vector<ErrorMap>& error_maps,
                             double q) {
  std::vector<double> errors;
  for (const auto& em : error_maps)
    for (int cell = 0; cell < em.cell_count(); ++cell)
      if (em.valid[cell]) errors.push_back(em.error[cell]);
  if (errors.empty())
    throw std::invalid_argument("global_error_quantile: no valid errors");
  std::sort(errors.begin(), errors.end());
  const size_t idx = std::min(
      errors.size() - 1,
      static_cast<size_t>(std::floor(q * static_cast<double>(errors.size()))));
  return errors[idx];
}

TrainingBuffer build_buffer_quantile(const std::vector<Frame>& frames,
                                     const std::vector<ErrorMap>& error_maps,
                                     double q, Rng& rng) {
  if (frames.empty())
    throw std::invalid_argument("build_buffer: no frames");
  const double threshold = global_error_quantile(error_maps, q);
  std::vector<BufferEntry> entries;
  for (int fi = 0; fi < static_cast<int>(frames.size()); ++fi) {
    const ErrorMap& em = error_maps[fi];
    for (int cell = 0; cell < frames[fi].grid.cell_count(); ++cell)
      if (em.valid[cell] && em.error[cell] < threshold)
        entries.push_back({fi, cell});
  }
  if (entries.empty()) {
    std::cerr << "build_buffer: quantile kept nothing; falling back to "
                 "random-all\n";
    return build_buffer_random_all(frames, rng);
  }
  return finalize_buffer(frames, std::move(entries), rng);
}

std::string mask_to_pbm(const EgfsMask& mask) {
  std::string out = "P1\n";
  out += std::to_string(mask.cols) + " " + std::to_string(mask.rows) + "\n";
  for (int row = 0; row < mask.rows; ++row) {
    for (int col = 0; col < mask.cols; ++col) {
      out += mask.selected[row * mask.cols + col] ? '1' : '0';
      out += (col + 1 == mask.cols) ? '\n' : ' ';
    }
  }
  return out;
}

EgfsMask mask_from_pbm(const std::string& text) {
  // Tokenize, skipping '#' comments to end of line.
  std::vector<std::string> tokens;
  for (size_t i = 0; i < text.size();) {
    if (text[i] == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    } else {
      size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
             text[j] != '#')
        ++j;
      tokens.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  if (tokens.size() < 3 || tokens[0] != "P1")
    throw SchemaError("pbm: expected P1 header");
  EgfsMask mask;
  mask.cols = std::stoi(tokens[1]);
  mask.rows = std::stoi(tokens[2]);
  if (mask.cols <= 0 || mask.rows <= 0)
    throw SchemaError("pbm: bad dimensions");
  const size_t n = static_cast<size_t>(mask.rows) * mask.cols;
  if (tokens.size() != 3 + n) throw SchemaError("pbm: wrong pixel count");
  mask.selected.resize(n);
  for (size_t i = 0; i < n; ++i) {
    if (tokens[3 + i] == "0") mask.selected[i] = 0;
    else if (tokens[3 + i] == "1") mask.selected[i] = 1;
    else throw SchemaError("pbm: bad pixel token: " + tokens[3 + i]);
  }
  return mask;
}

}  // namespace egfs

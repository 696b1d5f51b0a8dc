#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <set>

#include "egfs/io_util.hpp"
#include "egfs/selection.hpp"
#include "egfs/stats.hpp"
#include "egfs/training.hpp"

using namespace egfs;
namespace fs = std::filesystem;

namespace {

/// Hand-built frame with direct control over appearance and labels.
Frame make_test_frame(int rows, int cols, int frame_id = 0) {
  Frame f;
  f.frame_id = frame_id;
  f.intrinsics = {100, 100, cols * kPatchPx / 2.0, rows * kPatchPx / 2.0,
                  cols * kPatchPx, rows * kPatchPx};
  f.pose_gt = Pose::identity();
  f.grid.frame_id = frame_id;
  f.grid.resize(rows, cols, kFeatureDim);
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < cols; ++col) {
      const int cell = f.grid.cell_index(row, col);
      f.grid.pixels[cell * 2] = static_cast<float>(col * kPatchPx + 3.5);
      f.grid.pixels[cell * 2 + 1] = static_cast<float>(row * kPatchPx + 3.5);
      f.grid.gt_coords[cell * 3 + 2] = 2.0f;
    }
  }
  return f;
}

ErrorMap make_error_map(int rows, int cols,
                        const std::vector<double>& errors) {
  ErrorMap em;
  em.rows = rows;
  em.cols = cols;
  em.error = errors;
  em.valid.assign(rows * cols, 1);
  return em;
}

SceneConfig small_scene_config() {
  SceneConfig cfg;
  cfg.n_train_frames = 10;
  cfg.n_test_frames = 0;
  cfg.image_width = 120;
  cfg.image_height = 96;
  cfg.focal_px = 120;
  cfg.tiles_per_edge = 5;
  cfg.seed = 21;
  cfg.dynamic_fraction = 0.25;
  cfg.textureless_fraction = 0.2;
  return cfg;
}

}  // namespace

TEST_CASE("compute_error_maps: zero-weight params give center-projection map") {
  const Dataset ds = generate_scene(small_scene_config());
  Rng rng(1);
  RegressorParams p = RegressorParams::init(
      kFeatureDim, ds.scene.scene_center, ds.scene.radius(), rng);
  for (auto& t : p.tensors) t.setZero();

  const std::vector<ErrorMap> maps = compute_error_maps(p, ds.train);
  REQUIRE(maps.size() == ds.train.size());
  for (size_t fi = 0; fi < maps.size(); ++fi) {
    const Frame& f = ds.train[fi];
    const auto center_px =
        project(ds.scene.scene_center, f.pose_gt, f.intrinsics);
    REQUIRE(center_px.has_value());  // orbit cameras look at the center
    for (int cell = 0; cell < f.grid.cell_count(); ++cell) {
      REQUIRE(maps[fi].valid[cell] == 1);
      const double expected = (f.grid.pixel(cell) - *center_px).norm();
      CHECK(maps[fi].error[cell] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("select_prompts: tie-break and count on a uniform map") {
  const ErrorMap em = make_error_map(10, 10, std::vector<double>(100, 3.0));
  const PromptSet ps = select_prompts(em, 10.0);
  REQUIRE(ps.cells.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(ps.cells[i].row == 0);
    CHECK(ps.cells[i].col == i);  // lexicographically first cells
  }
}

TEST_CASE("select_prompts: errors equal to cell index select cells 0..9") {
  std::vector<double> errors(100);
  for (int i = 0; i < 100; ++i) errors[i] = i;
  const PromptSet ps = select_prompts(make_error_map(10, 10, errors), 10.0);
  REQUIRE(ps.cells.size() == 10);
  for (int i = 0; i < 10; ++i)
    CHECK(ps.cells[i].row * 10 + ps.cells[i].col == i);
}

TEST_CASE("select_prompts: matches the full-sort oracle on random maps") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 6, cols = 8;
    std::vector<double> errors(rows * cols);
    ErrorMap em = make_error_map(rows, cols, errors);
    for (auto& e : em.error) e = rng.uniform(0, 50);
    for (auto& v : em.valid) v = rng.uniform() < 0.8 ? 1 : 0;
    const double tau = rng.uniform(5.0, 40.0);
    const PromptSet ps = select_prompts(em, tau);

    // oracle: full sort of (error, row, col) over valid cells
    std::vector<std::tuple<double, int, int>> sorted;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        if (em.valid[r * cols + c])
          sorted.emplace_back(em.error[r * cols + c], r, c);
    std::sort(sorted.begin(), sorted.end());
    const size_t expected =
        sorted.empty()
            ? 0
            : std::max<size_t>(
                  1, static_cast<size_t>(
                         std::ceil(tau / 100.0 * sorted.size())));
    REQUIRE(ps.cells.size() == std::min(expected, sorted.size()));
    for (size_t i = 0; i < ps.cells.size(); ++i) {
      CHECK(ps.cells[i].row == std::get<1>(sorted[i]));
      CHECK(ps.cells[i].col == std::get<2>(sorted[i]));
    }

    // quantile property: max prompt error <= min non-prompt error (ties ok)
    if (!ps.cells.empty() && ps.cells.size() < sorted.size()) {
      CHECK(ps.cells.back().error <= std::get<0>(sorted[ps.cells.size()]));
    }
  }
}

TEST_CASE("select_prompts: no valid cells gives an empty set") {
  ErrorMap em = make_error_map(4, 4, std::vector<double>(16, 1.0));
  em.valid.assign(16, 0);
  CHECK(select_prompts(em, 10.0).cells.empty());
}

TEST_CASE("GrowExpander: uniform appearance floods the whole grid") {
  Frame f = make_test_frame(6, 8);
  for (int cell = 0; cell < f.grid.cell_count(); ++cell)
    for (int d = 0; d < 3; ++d) f.grid.appearance[cell * 3 + d] = 0.4f;
  PromptSet ps;
  ps.cells.push_back({2, 3, 0.0});
  const EgfsMask mask = GrowExpander(0.05).expand(ps, f);
  CHECK(mask.count() == f.grid.cell_count());
}

TEST_CASE("GrowExpander: zero tolerance with per-cell noise keeps prompts only") {
  Frame f = make_test_frame(6, 8);
  Rng rng(3);
  for (int cell = 0; cell < f.grid.cell_count(); ++cell)
    for (int d = 0; d < 3; ++d)
      f.grid.appearance[cell * 3 + d] = static_cast<float>(rng.uniform());
  PromptSet ps;
  ps.cells.push_back({1, 1, 0.0});
  ps.cells.push_back({4, 6, 0.0});
  const EgfsMask mask = GrowExpander(0.0).expand(ps, f);
  CHECK(mask.count() == 2);
  CHECK(mask.at(1, 1));
  CHECK(mask.at(4, 6));
}

TEST_CASE("GrowExpander: output is a union of 4-connected prompt components") {
  const Dataset ds = generate_scene(small_scene_config());
  Rng rng(7);
  RegressorParams p = RegressorParams::init(
      kFeatureDim, ds.scene.scene_center, ds.scene.radius(), rng);
  const std::vector<ErrorMap> maps = compute_error_maps(p, ds.train);

  for (size_t fi = 0; fi < 3; ++fi) {
    const Frame& f = ds.train[fi];
    const PromptSet ps = select_prompts(maps[fi], 10.0);
    const EgfsMask mask = GrowExpander(0.05).expand(ps, f);

    // graph check: every selected component must contain a prompt
    std::set<int> prompt_cells;
    for (const auto& c : ps.cells)
      prompt_cells.insert(f.grid.cell_index(c.row, c.col));
    for (const auto& c : ps.cells) CHECK(mask.at(c.row, c.col));

    std::vector<int> component(mask.selected.size(), -1);
    int n_components = 0;
    for (int start = 0; start < static_cast<int>(mask.selected.size()); ++start) {
      if (!mask.selected[start] || component[start] >= 0) continue;
      const int comp = n_components++;
      std::vector<int> stack{start};
      component[start] = comp;
      bool has_prompt = prompt_cells.count(start) > 0;
      while (!stack.empty()) {
        const int cell = stack.back();
        stack.pop_back();
        const int row = cell / mask.cols, col = cell % mask.cols;
        const int offs[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
        for (const auto& o : offs) {
          const int nr = row + o[0], nc = col + o[1];
          if (nr < 0 || nr >= mask.rows || nc < 0 || nc >= mask.cols) continue;
          const int ncell = nr * mask.cols + nc;
          if (!mask.selected[ncell] || component[ncell] >= 0) continue;
          component[ncell] = comp;
          if (prompt_cells.count(ncell)) has_prompt = true;
          stack.push_back(ncell);
        }
        if (prompt_cells.count(cell)) has_prompt = true;
      }
      CHECK(has_prompt);
    }
  }
}

TEST_CASE("OracleExpander: mask equals the prompt surface's label component") {
  Frame f = make_test_frame(6, 8);
  // left half static, right half dynamic
  for (int row = 0; row < 6; ++row)
    for (int col = 0; col < 8; ++col)
      f.grid.labels[f.grid.cell_index(row, col)] =
          col < 4 ? static_cast<uint8_t>(RegionLabel::kStaticTextured)
                  : static_cast<uint8_t>(RegionLabel::kDynamic);
  PromptSet ps;
  ps.cells.push_back({2, 1, 0.0});
  const EgfsMask mask = OracleExpander().expand(ps, f);
  CHECK(mask.count() == 6 * 4);
  for (int row = 0; row < 6; ++row)
    for (int col = 0; col < 8; ++col)
      CHECK(mask.at(row, col) == (col < 4));
}

TEST_CASE("FileExpander: keeps components covering prompts; missing file errors") {
  Frame f = make_test_frame(4, 6);
  EgfsMask disk_mask;
  disk_mask.rows = 4;
  disk_mask.cols = 6;
  disk_mask.selected.assign(24, 0);
  // two components: left block rows 0-3 x cols 0-1, single cell at (0,5)
  for (int row = 0; row < 4; ++row)
    for (int col = 0; col < 2; ++col) disk_mask.selected[row * 6 + col] = 1;
  disk_mask.selected[5] = 1;

  const fs::path dir = fs::temp_directory_path() / "egfs_file_expander";
  fs::create_directories(dir);
  write_file_atomic(dir / "0.pbm", mask_to_pbm(disk_mask));

  PromptSet ps;
  ps.cells.push_back({1, 0, 0.0});  // inside the left block
  const EgfsMask mask = FileExpander(dir).expand(ps, f);
  CHECK(mask.count() == 8);
  CHECK(!mask.at(0, 5));  // promptless component dropped

  Frame f2 = make_test_frame(4, 6, 99);
  CHECK_THROWS_WITH_AS(FileExpander(dir).expand(ps, f2),
                       doctest::Contains("missing mask for frame 99"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("refine_with_confidence: uniform and mask-aligned confidences") {
  Frame f = make_test_frame(5, 5);
  EgfsMask mask;
  mask.rows = mask.cols = 5;
  mask.selected.assign(25, 0);
  for (int cell : {2, 7, 12, 13}) mask.selected[cell] = 1;
  const ErrorMap em = make_error_map(5, 5, std::vector<double>(25, 1.0));

  SUBCASE("uniform confidence keeps the mask") {
    const std::vector<double> conf(25, 0.7);
    const EgfsMask refined = refine_with_confidence(mask, conf, em);
    CHECK(refined.selected == mask.selected);
  }
  SUBCASE("confidence 1 on mask, 0 elsewhere keeps the mask") {
    std::vector<double> conf(25, 0.0);
    for (int cell : {2, 7, 12, 13}) conf[cell] = 1.0;
    const EgfsMask refined = refine_with_confidence(mask, conf, em);
    CHECK(refined.selected == mask.selected);
  }
  SUBCASE("random confidence matches the sort-based oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> conf(25);
      for (auto& c : conf) c = rng.uniform();
      const EgfsMask refined = refine_with_confidence(mask, conf, em);

      std::vector<double> sorted(conf);
      std::sort(sorted.begin(), sorted.end());
      const double median = 0.5 * (sorted[12] + sorted[12]);  // n=25 odd
      int expected = 0;
      for (int cell = 0; cell < 25; ++cell)
        if (mask.selected[cell] && conf[cell] >= median) ++expected;
      if (expected == 0) {
        CHECK(refined.selected == mask.selected);  // fallback
      } else {
        CHECK(refined.count() == expected);
        for (int cell = 0; cell < 25; ++cell)
          CHECK(refined.selected[cell] ==
                (mask.selected[cell] && conf[cell] >= median ? 1 : 0));
        // contraction
        for (int cell = 0; cell < 25; ++cell)
          if (refined.selected[cell]) CHECK(mask.selected[cell]);
      }
    }
  }
}

TEST_CASE("build_buffer: full masks select every patch") {
  const Dataset ds = generate_scene(small_scene_config());
  std::vector<EgfsMask> masks;
  size_t total = 0;
  for (const auto& f : ds.train) {
    EgfsMask m;
    m.frame_id = f.frame_id;
    m.rows = f.grid.rows;
    m.cols = f.grid.cols;
    m.selected.assign(f.grid.cell_count(), 1);
    masks.push_back(m);
    total += f.grid.cell_count();
  }
  Rng rng = Rng::stream(3, "buffer");
  const TrainingBuffer buffer = build_buffer_masked(ds.train, masks, rng);
  CHECK(buffer.entries.size() == total);
}

TEST_CASE("build_buffer: egfs-mask membership audit") {
  const Dataset ds = generate_scene(small_scene_config());
  Rng prng(13);
  std::vector<EgfsMask> masks;
  for (const auto& f : ds.train) {
    EgfsMask m;
    m.frame_id = f.frame_id;
    m.rows = f.grid.rows;
    m.cols = f.grid.cols;
    m.selected.assign(f.grid.cell_count(), 0);
    for (auto& v : m.selected) v = prng.uniform() < 0.3 ? 1 : 0;
    masks.push_back(m);
  }
  Rng rng = Rng::stream(3, "buffer");
  const TrainingBuffer buffer = build_buffer_masked(ds.train, masks, rng);
  CHECK(!buffer.entries.empty());
  for (const auto& e : buffer.entries)
    CHECK(masks[e.frame_idx].selected[e.cell] == 1);
}

TEST_CASE("build_buffer: all-empty masks fall back to random-all") {
  const Dataset ds = generate_scene(small_scene_config());
  std::vector<EgfsMask> masks;
  for (const auto& f : ds.train) {
    EgfsMask m;
    m.rows = f.grid.rows;
    m.cols = f.grid.cols;
    m.selected.assign(f.grid.cell_count(), 0);
    masks.push_back(m);
  }
  Rng rng = Rng::stream(3, "buffer");
  const TrainingBuffer buffer = build_buffer_masked(ds.train, masks, rng);
  size_t total = 0;
  for (const auto& f : ds.train) total += f.grid.cell_count();
  CHECK(buffer.entries.size() == total);
}

TEST_CASE("build_buffer: quantile(0.5) on errors = cell index keeps lower half") {
  // one synthetic frame list with a hand-made error map
  const Dataset ds = generate_scene(small_scene_config());
  const int n = ds.train[0].grid.cell_count();
  std::vector<ErrorMap> maps;
  for (size_t fi = 0; fi < ds.train.size(); ++fi) {
    ErrorMap em;
    em.frame_id = ds.train[fi].frame_id;
    em.rows = ds.train[fi].grid.rows;
    em.cols = ds.train[fi].grid.cols;
    em.error.resize(n);
    em.valid.assign(n, fi == 0 ? 1 : 0);  // only frame 0 participates
    for (int cell = 0; cell < n; ++cell) em.error[cell] = cell;
    maps.push_back(em);
  }
  Rng rng = Rng::stream(3, "buffer");
  const TrainingBuffer buffer =
      build_buffer_quantile(ds.train, maps, 0.5, rng);
  // the eligible pool is exactly the lower half; the buffer upsamples it to
  // the fixed target size and contains every eligible cell at least once
  size_t total = 0;
  for (const auto& f : ds.train) total += f.grid.cell_count();
  CHECK(buffer.entries.size() == total);
  std::set<int> distinct;
  for (const auto& e : buffer.entries) {
    CHECK(e.frame_idx == 0);
    CHECK(e.cell < n / 2);
    distinct.insert(e.cell);
  }
  CHECK(distinct.size() == static_cast<size_t>(n / 2));
}

TEST_CASE("pbm round-trip") {
  EgfsMask mask;
  mask.rows = 3;
  mask.cols = 5;
  mask.selected = {1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1};
  const EgfsMask back = mask_from_pbm(mask_to_pbm(mask));
  CHECK(back.rows == 3);
  CHECK(back.cols == 5);
  CHECK(back.selected == mask.selected);
  CHECK_THROWS_AS(mask_from_pbm("P2\n1 1\n0\n"), SchemaError);
  CHECK_THROWS_AS(mask_from_pbm("P1\n2 2\n0 1 1\n"), SchemaError);
}

TEST_CASE("run_training: iteration structure, artifacts, determinism") {
  SceneConfig scfg = small_scene_config();
  const Dataset ds = generate_scene(scfg);
  TrainConfig cfg;
  cfg.epochs_total = 4;
  cfg.epochs_per_iteration = 2;
  cfg.batch_size = 512;
  cfg.seed = 17;
  const GrowExpander expander(0.05);

  const TrainingRun run_a =
      run_training(ds, cfg, &expander, {SamplingMode::kEgfs, 0.5});
  REQUIRE(run_a.iterations.size() == 2);
  CHECK(run_a.iterations[0].masks.empty());   // random first iteration
  CHECK(run_a.iterations[0].epoch_stats.size() == 2);
  REQUIRE(run_a.iterations[1].masks.size() == ds.train.size());
  CHECK(run_a.iterations[1].iteration == 2);
  for (const auto& m : run_a.iterations[1].masks) {
    CHECK(m.iteration == 2);
    CHECK(m.expander_id == "grow");
  }
  CHECK(run_a.iterations[1].buffer_size > 0);

  const TrainingRun run_b =
      run_training(ds, cfg, &expander, {SamplingMode::kEgfs, 0.5});
  for (size_t i = 0; i < run_a.params.tensors.size(); ++i)
    CHECK(run_a.params.tensors[i] == run_b.params.tensors[i]);
  for (size_t fi = 0; fi < ds.train.size(); ++fi)
    CHECK(run_a.iterations[1].masks[fi].selected ==
          run_b.iterations[1].masks[fi].selected);

  // k = epochs_total degenerates to plain random training, masks never made
  TrainConfig plain = cfg;
  plain.epochs_per_iteration = plain.epochs_total;
  const TrainingRun run_c =
      run_training(ds, plain, &expander, {SamplingMode::kEgfs, 0.5});
  CHECK(run_c.iterations.size() == 1);
  CHECK(run_c.iterations[0].masks.empty());

  // quantile mode needs no expander
  const TrainingRun run_q =
      run_training(ds, cfg, nullptr, {SamplingMode::kQuantile, 0.5});
  CHECK(run_q.iterations.size() == 2);
  CHECK(run_q.iterations[1].masks.empty());
}

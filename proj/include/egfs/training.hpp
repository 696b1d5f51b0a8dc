#pragma once

#include "egfs/selection.hpp"

namespace egfs {

enum class SamplingMode { kRandom, kEgfs, kQuantile };

const char* sampling_mode_name(SamplingMode mode);

struct RunMode {
  SamplingMode sampling = SamplingMode::kEgfs;
  double quantile_q = 0.5;  // used by kQuantile
};

/// Artifacts of one training iteration (k epochs with a frozen buffer).
/// Masks and prompts describe the buffer used DURING this iteration, so
/// they are empty for iteration 1 (random sampling) and non-egfs modes.
struct IterationArtifacts {
  int iteration = 0;  // 1-based
  std::vector<EgfsMask> masks;      // aligned with the training frame list
  std::vector<PromptSet> prompts;   // prompts that seeded the masks
  std::vector<EpochStats> epoch_stats;
  size_t buffer_size = 0;
};

struct TrainingRun {
  RegressorParams params;
  std::vector<IterationArtifacts> iterations;
};

/// The iterative training loop: iteration 1 trains on randomly sampled
/// features; each subsequent iteration regenerates the sampling (error-guided
/// masks, or the quantile baseline) from the current model and trains k more
/// epochs on the rebuilt buffer. Masks stay frozen within an iteration.
/// Deterministic given cfg.seed.
TrainingRun run_training(const Dataset& dataset, const TrainConfig& cfg,
                         const RegionExpander* expander, const RunMode& mode);

}  // namespace egfs

#include "egfs/training.hpp"

#include <stdexcept>

namespace egfs {

const char* sampling_mode_name(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::kRandom: return "random";
    case SamplingMode::kEgfs: return "egfs";
    case SamplingMode::kQuantile: return "quantile";
  }
  return "unknown";
}

TrainingRun run_training(const Dataset& dataset, const TrainConfig& cfg,
                         const RegionExpander* expander, const RunMode& mode) {
  cfg.validate();
  if (mode.sampling == SamplingMode::kEgfs && expander == nullptr)
    throw std::invalid_argument("run_training: egfs mode needs an expander");
  if (mode.sampling == SamplingMode::kQuantile &&
      (mode.quantile_q <= 0 || mode.quantile_q >= 1))
    throw std::invalid_argument("run_training: quantile_q must be in (0,1)");
  const std::vector<Frame>& frames = dataset.train;
  if (frames.empty()) throw std::invalid_argument("run_training: no frames");

  Rng rng_train = Rng::stream(cfg.seed, "train");
  Rng rng_buffer = Rng::stream(cfg.seed, "buffer");

  TrainingRun run;
  run.params = RegressorParams::init(frames[0].grid.dim,
                                     dataset.scene.scene_center,
                                     dataset.scene.radius(), rng_train);
  AdamState adam = AdamState::init_like(run.params.tensors);

  const int n_iterations = cfg.epochs_total / cfg.epochs_per_iteration;
  TrainingBuffer buffer = build_buffer_random_all(frames, rng_buffer);
  IterationArtifacts next;  // masks/prompts feeding the upcoming iteration

  for (int iter = 1; iter <= n_iterations; ++iter) {
    IterationArtifacts art = std::move(next);
    next = IterationArtifacts{};
    art.iteration = iter;
    art.buffer_size = buffer.entries.size();

    for (int e = 0; e < cfg.epochs_per_iteration; ++e) {
      const int global_epoch = (iter - 1) * cfg.epochs_per_iteration + e;
      const double t0 =
          static_cast<double>(global_epoch) / cfg.epochs_total;
      const double t1 =
          static_cast<double>(global_epoch + 1) / cfg.epochs_total;
      art.epoch_stats.push_back(
          train_epoch(run.params, buffer, t0, t1, cfg, adam, rng_train));
    }

    if (iter < n_iterations) {
      if (mode.sampling == SamplingMode::kEgfs) {
        const std::vector<ErrorMap> error_maps =
            compute_error_maps(run.params, frames);
        const std::vector<std::vector<double>> confidence =
            cfg.confidence_on ? compute_confidence_grids(run.params, frames)
                              : std::vector<std::vector<double>>{};
        std::vector<EgfsMask> masks;
        std::vector<PromptSet> prompts;
        masks.reserve(frames.size());
        prompts.reserve(frames.size());
        for (size_t fi = 0; fi < frames.size(); ++fi) {
          PromptSet ps = select_prompts(error_maps[fi], cfg.tau_prompt_pct);
          EgfsMask mask = expander->expand(ps, frames[fi]);
          if (cfg.confidence_on)
            mask = refine_with_confidence(mask, confidence[fi], error_maps[fi]);
          mask.iteration = iter + 1;
          masks.push_back(std::move(mask));
          prompts.push_back(std::move(ps));
        }
        buffer = build_buffer_masked(frames, masks, rng_buffer);
        next.masks = std::move(masks);
        next.prompts = std::move(prompts);
      } else if (mode.sampling == SamplingMode::kQuantile) {
        const std::vector<ErrorMap> error_maps =
            compute_error_maps(run.params, frames);
        buffer = build_buffer_quantile(frames, error_maps, mode.quantile_q,
                                       rng_buffer);
      }
      // kRandom keeps the full buffer; per-epoch shuffling continues.
    }
    run.iterations.push_back(std::move(art));
  }
  return run;
}

}  // namespace egfs

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowdistill/distill.hpp"
#include "flowdistill/generator.hpp"
#include "flowdistill/schedule.hpp"

namespace flowdistill {

struct StageOverrides {
  std::optional<double> learning_rate;
  std::optional<std::size_t> inner_steps;
  std::optional<double> guidance;
  std::optional<bool> aux_training;
  std::optional<bool> pose_conditioned_aux;
};

struct StageSpec {
  std::string name;
  StageWindow window;
  std::string generator = "multiview";
  GridShape resolution{16, 16};
  AuxMode aux = AuxMode::ideal;
  double prior_scale = 0.1;
  // DSM steps for the base network of a lora aux, fitted to the stage priors.
  std::size_t lora_pretrain_steps = 300;
  StageOverrides overrides;
};

struct StagePlan {
  std::vector<StageSpec> stages;

  // Throws ParameterError unless t_start never increases and the resolution
  // never shrinks from one stage to the next.
  void validate() const;
};

// nerf (16x16, lora aux) -> geometry (32x32, ideal aux) -> texture -> refine.
// The view-prior scale shrinks from stage to stage.
StagePlan preset_plan(GridShape coarse = {16, 16}, GridShape fine = {32, 32});

// View targets of one stage, built for that stage's generator.
using StagePriorFactory = std::function<std::vector<ViewTarget>(const StageSpec&, const Generator&)>;

// Per-pose Gaussian priors around the ground truth, box-resampled to each
// stage's resolution.
StagePriorFactory benchmark_prior_factory(Scene truth, std::vector<CameraPose> poses);

struct PipelineResult {
  Scene final_scene;
  std::vector<TrajectoryRecord> records;  // one per stage that ran
  std::vector<Scene> stage_scenes;        // scene after each completed stage
  std::optional<std::string> failure;

  bool ok() const { return !failure; }
};

// Stages run in order with the scene carried (and upsampled) between them.
// Stage 0 uses `seed`, stage k > 0 uses derive_seed(seed, k). Step numbers
// continue across stages. A failing stage stops the run.
PipelineResult run_pipeline(const StagePlan& plan, const StagePriorFactory& priors, const DistillConfig& base,
                            std::uint64_t seed, std::optional<Scene> initial = std::nullopt);

// Bilinear upsampling (pixel-centre aligned, clamped edges) plus a per-block
// mean correction, so box downsampling recovers the input exactly.
Scene upsample_scene(const Scene& scene, std::size_t factor);

// Mean over factor x factor blocks.
Scene downsample_scene(const Scene& scene, std::size_t factor);

}  // namespace flowdistill

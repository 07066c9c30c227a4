#include "flowdistill/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "flowdistill/error.hpp"
#include "flowdistill/rng.hpp"

namespace flowdistill {

namespace {

void require_grid(const Scene& scene, const char* who) {
  if (!scene.is_grid()) throw ParameterError(std::string(who) + ": scene is not a grid");
  scene.validate();
}

void check_factor(std::size_t factor, const char* who) {
  if (factor != 2 && factor != 4) throw ParameterError(std::string(who) + ": factor must be 2 or 4");
}

Scene block_replicate(const Scene& scene, std::size_t factor) {
  const GridShape out_shape{scene.shape.height * factor, scene.shape.width * factor};
  Scene out = Scene::grid(out_shape);
  out.stage = scene.stage;
  for (std::size_t r = 0; r < out_shape.height; ++r)
    for (std::size_t c = 0; c < out_shape.width; ++c)
      out.theta[r * out_shape.width + c] = scene.theta[(r / factor) * scene.shape.width + c / factor];
  return out;
}

Scene bilinear(const Scene& scene, std::size_t factor) {
  const std::size_t h = scene.shape.height;
  const std::size_t w = scene.shape.width;
  const GridShape out_shape{h * factor, w * factor};
  Scene out = Scene::grid(out_shape);
  out.stage = scene.stage;
  const double f = static_cast<double>(factor);
  auto coord = [f](std::size_t i, std::size_t n, std::size_t& lo, std::size_t& hi, double& frac) {
    const double u = std::clamp((static_cast<double>(i) + 0.5) / f - 0.5, 0.0, static_cast<double>(n - 1));
    lo = static_cast<std::size_t>(std::floor(u));
    hi = std::min(lo + 1, n - 1);
    frac = u - static_cast<double>(lo);
  };
  for (std::size_t r = 0; r < out_shape.height; ++r) {
    std::size_t r0, r1;
    double fr;
    coord(r, h, r0, r1, fr);
    for (std::size_t c = 0; c < out_shape.width; ++c) {
      std::size_t c0, c1;
      double fc;
      coord(c, w, c0, c1, fc);
      const auto at = [&](std::size_t rr, std::size_t cc) { return scene.theta[rr * w + cc]; };
      out.theta[r * out_shape.width + c] = (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c1)) +
                                           fr * ((1 - fc) * at(r1, c0) + fc * at(r1, c1));
    }
  }
  return out;
}

}  // namespace

void StagePlan::validate() const {
  if (stages.empty()) throw ParameterError("StagePlan: no stages");
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const auto& s = stages[k];
    s.window.validate();
    if (s.resolution.size() == 0) throw ParameterError("StagePlan: empty resolution in stage " + s.name);
    if (!(s.prior_scale > 0.0)) throw ParameterError("StagePlan: prior scale must be positive");
    if (k == 0) continue;
    const auto& prev = stages[k - 1];
    if (s.window.t_start > prev.window.t_start)
      throw ParameterError("StagePlan: stage " + s.name + " starts at a later time than " + prev.name);
    if (s.resolution.height < prev.resolution.height || s.resolution.width < prev.resolution.width)
      throw ParameterError("StagePlan: stage " + s.name + " lowers the resolution");
    if (s.resolution != prev.resolution) {
      const std::size_t fh = s.resolution.height / prev.resolution.height;
      if (fh * prev.resolution.height != s.resolution.height || fh * prev.resolution.width != s.resolution.width ||
          (fh != 2 && fh != 4))
        throw ParameterError("StagePlan: resolution must grow by a factor of 2 or 4");
    }
  }
}

StagePlan preset_plan(GridShape coarse, GridShape fine) {
  StagePlan plan;
  StageSpec nerf{"nerf", stage_preset("nerf"), "multiview", coarse, AuxMode::lora, 0.2, 300, {}};
  StageSpec geometry{"geometry", stage_preset("geometry"), "multiview", fine, AuxMode::ideal, 0.1, 300, {}};
  StageSpec texture{"texture", stage_preset("texture"), "multiview", fine, AuxMode::ideal, 0.1, 300, {}};
  StageSpec refine{"refine", stage_preset("refine"), "multiview", fine, AuxMode::ideal, 0.05, 300, {}};
  plan.stages = {nerf, geometry, texture, refine};
  return plan;
}

StagePriorFactory benchmark_prior_factory(Scene truth, std::vector<CameraPose> poses) {
  require_grid(truth, "benchmark_prior_factory");
  return [truth = std::move(truth), poses = std::move(poses)](const StageSpec& stage, const Generator& gen) {
    Scene t = truth;
    if (t.shape != stage.resolution) {
      const std::size_t factor = t.shape.height / stage.resolution.height;
      if (factor * stage.resolution.height != t.shape.height || factor * stage.resolution.width != t.shape.width)
        throw ParameterError("benchmark_prior_factory: truth does not tile the stage resolution");
      while (t.shape != stage.resolution) {
        const std::size_t remaining = t.shape.height / stage.resolution.height;
        t = downsample_scene(t, remaining % 4 == 0 ? 4 : 2);
      }
    }
    return view_targets(make_benchmark(gen, t, poses, stage.prior_scale));
  };
}

Scene upsample_scene(const Scene& scene, std::size_t factor) {
  require_grid(scene, "upsample_scene");
  check_factor(factor, "upsample_scene");
  Scene up = bilinear(scene, factor);
  const Scene residual{scene.theta - downsample_scene(up, factor).theta, scene.shape, scene.stage};
  up.theta += block_replicate(residual, factor).theta;
  return up;
}

Scene downsample_scene(const Scene& scene, std::size_t factor) {
  require_grid(scene, "downsample_scene");
  check_factor(factor, "downsample_scene");
  const std::size_t h = scene.shape.height;
  const std::size_t w = scene.shape.width;
  if (h % factor != 0 || w % factor != 0) throw ParameterError("downsample_scene: shape not divisible by factor");
  const GridShape out_shape{h / factor, w / factor};
  Scene out = Scene::grid(out_shape);
  out.stage = scene.stage;
  const double norm = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t r = 0; r < out_shape.height; ++r)
    for (std::size_t c = 0; c < out_shape.width; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < factor; ++i)
        for (std::size_t j = 0; j < factor; ++j) sum += scene.theta[(r * factor + i) * w + c * factor + j];
      out.theta[r * out_shape.width + c] = sum * norm;
    }
  return out;
}

PipelineResult run_pipeline(const StagePlan& plan, const StagePriorFactory& priors, const DistillConfig& base,
                            std::uint64_t seed, std::optional<Scene> initial) {
  plan.validate();
  if (!priors) throw ParameterError("run_pipeline: no prior factory");
  PipelineResult result;
  Scene scene = initial ? *initial : Scene::grid(plan.stages.front().resolution);
  std::size_t step = 0;

  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const StageSpec& stage = plan.stages[k];
    if (scene.shape != stage.resolution) {
      if (!scene.is_grid()) throw ParameterError("run_pipeline: cannot resample a flat scene");
      scene = upsample_scene(scene, stage.resolution.height / scene.shape.height);
    }

    DistillConfig cfg = base;
    cfg.seed = k == 0 ? seed : derive_seed(seed, k);
    cfg.stage = stage.name;
    cfg.window = stage.window;
    cfg.aux = stage.aux;
    if (stage.overrides.learning_rate) cfg.optimizer.learning_rate = *stage.overrides.learning_rate;
    if (stage.overrides.inner_steps) cfg.inner_steps = *stage.overrides.inner_steps;
    if (stage.overrides.guidance) cfg.guidance = *stage.overrides.guidance;
    if (stage.overrides.aux_training) cfg.aux_training = *stage.overrides.aux_training;
    if (stage.overrides.pose_conditioned_aux) cfg.pose_conditioned_aux = *stage.overrides.pose_conditioned_aux;

    const auto generator = make_generator(stage.generator, stage.resolution);
    const auto targets = priors(stage, *generator);
    if (targets.empty()) throw ParameterError("run_pipeline: stage " + stage.name + " has no views");
    std::shared_ptr<const MlpDenoiser> lora_base;
    if (cfg.aux == AuxMode::lora) lora_base = train_aux_base(targets, stage.lora_pretrain_steps, cfg);
    std::vector<CameraPose> poses;
    for (const auto& t : targets) poses.push_back(t.pose);
    auto aux = make_aux_model(cfg, lora_base, poses);

    TrajectoryRecord record = run_distillation(*generator, scene, targets, *aux, cfg, step);
    step += record.rows.size();
    scene = record.final_scene;
    const bool failed = !record.ok();
    if (failed) result.failure = "stage " + stage.name + ": " + *record.failure;
    result.records.push_back(std::move(record));
    if (failed) break;
    result.stage_scenes.push_back(scene);
  }
  result.final_scene = scene;
  return result;
}

}  // namespace flowdistill

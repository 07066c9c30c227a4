#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowdistill/denoiser.hpp"
#include "flowdistill/dsm.hpp"
#include "flowdistill/generator.hpp"
#include "flowdistill/lora.hpp"
#include "flowdistill/network.hpp"
#include "flowdistill/optim.hpp"
#include "flowdistill/schedule.hpp"

namespace flowdistill {

enum class Method { sds, vsd, apfo };
enum class TimestepPolicy { random, annealed, scheduled };
enum class AuxMode { ideal, lora, analytic };
enum class InnerOptimizer { sgd, adam };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);
TimestepPolicy parse_timestep_policy(std::string_view name);
std::string_view to_string(TimestepPolicy p);
AuxMode parse_aux_mode(std::string_view name);
std::string_view to_string(AuxMode m);
InnerOptimizer parse_inner_optimizer(std::string_view name);
std::string_view to_string(InnerOptimizer o);

struct OptimizerConfig {
  InnerOptimizer kind = InnerOptimizer::sgd;
  double learning_rate = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First-order update of generator parameters: plain gradient steps or Adam.
// Adam moments persist across calls for the lifetime of a run.
class ParameterOptimizer {
 public:
  explicit ParameterOptimizer(OptimizerConfig config);
  void step(Vector& theta, const Vector& grad);

 private:
  OptimizerConfig config_;
  Adam adam_;
};

struct DistillConfig {
  Method method = Method::apfo;
  TimestepPolicy policy = TimestepPolicy::scheduled;
  Weighting weighting = Weighting::edm;  // lambda(t) for sds / vsd
  double sigma_data = 0.5;
  double guidance = 0.0;
  std::optional<std::string> label;  // unconditional when absent

  AuxMode aux = AuxMode::ideal;
  bool aux_training = true;        // one adapter DSM step per rendered view (lora)
  bool pose_conditioned_aux = false;
  double aux_scale = 0.0;          // analytic: spread of the rendered distribution
  std::size_t aux_batch = 4;       // noise draws per adapter step
  DsmConfig aux_dsm{};
  LoraConfig lora{};

  std::size_t inner_steps = 3;     // K
  OptimizerConfig optimizer{};

  NoiseSchedule schedule{};
  StageWindow window = stage_preset("nerf");
  double t_min = 0.02;             // random / annealed timestep range
  double t_max = 0.98;
  std::size_t total_updates = 0;   // sds / vsd; 0 matches the apfo budget of the window

  std::uint64_t seed = 0;
  bool reproducible = false;       // record wall_ms as 0
  std::string stage = "main";

  void validate() const;
  std::size_t views_per_step() const { return window.views_per_step; }
};

// Prior for one camera pose. D_p^w is built from the configured label and guidance.
struct ViewTarget {
  CameraPose pose;
  std::shared_ptr<const ConditionalPriorSet> prior;
};

std::vector<ViewTarget> view_targets(const ViewPriorSet& set);
std::vector<ViewTarget> shared_prior_targets(std::span<const CameraPose> poses,
                                             std::shared_ptr<const ConditionalPriorSet> prior);
std::shared_ptr<const ConditionalPriorSet> single_prior_set(const GaussianMixturePrior& prior);

// D_phi / D_q inside the optimization loop.
class AuxModel {
 public:
  virtual ~AuxModel() = default;
  virtual Vector denoise(const Vector& clean, const Vector& noisy, double sigma, const CameraPose& pose) const = 0;
  virtual std::size_t evals_per_call() const = 0;
  // Current generator state, for models that depend on all renders.
  virtual void bind(const Generator&, const Vector&) {}
  // Sees the fresh render after a view update; returns evaluations spent.
  virtual std::size_t observe(const Vector&, const CameraPose&, Rng&) { return 0; }
};

// D(x + n; sigma) = x.
class IdealAuxModel final : public AuxModel {
 public:
  Vector denoise(const Vector& clean, const Vector&, double, const CameraPose&) const override { return clean; }
  std::size_t evals_per_call() const override { return 0; }
};

// Exact denoiser of the rendered distribution, an equal-weight mixture of
// N(render, scale^2 I) atoms (Dirac atoms at scale 0). The atoms are every
// particle for particle generators, the renders at `poses` when given (the
// pose-free rendered distribution), and the current view's render otherwise.
class AnalyticAuxModel final : public AuxModel {
 public:
  explicit AnalyticAuxModel(double scale = 0.0, std::vector<CameraPose> poses = {});
  Vector denoise(const Vector& clean, const Vector& noisy, double sigma, const CameraPose& pose) const override;
  std::size_t evals_per_call() const override { return 1; }
  void bind(const Generator& generator, const Vector& theta) override;

 private:
  double scale_;
  std::vector<CameraPose> poses_;
  std::vector<Vector> renders_;
};

// A fixed denoiser regardless of the render, e.g. D_phi = D_p.
class FixedAuxModel final : public AuxModel {
 public:
  explicit FixedAuxModel(std::shared_ptr<const Denoiser> model) : model_(std::move(model)) {}
  Vector denoise(const Vector&, const Vector& noisy, double sigma, const CameraPose&) const override {
    return model_->denoise(noisy, sigma);
  }
  std::size_t evals_per_call() const override { return 1; }

 private:
  std::shared_ptr<const Denoiser> model_;
};

// Adapter-wrapped network, optionally fine-tuned on every fresh render.
class LoraAuxModel final : public AuxModel {
 public:
  LoraAuxModel(std::shared_ptr<LoraDenoiser> net, bool training, bool pose_conditioned, std::size_t batch,
               DsmConfig dsm);
  Vector denoise(const Vector& clean, const Vector& noisy, double sigma, const CameraPose& pose) const override;
  std::size_t evals_per_call() const override { return 1; }
  std::size_t observe(const Vector& render, const CameraPose& pose, Rng& rng) override;
  const LoraDenoiser& net() const { return *net_; }

 private:
  std::shared_ptr<LoraDenoiser> net_;
  bool training_;
  bool pose_conditioned_;
  std::size_t batch_;
  DsmConfig dsm_;
};

struct GradResult {
  Vector grad;    // lambda * (dx/dtheta)^T residual
  Vector target;  // stop-gradient regression target x - residual
  double loss;    // 0.5 * lambda * ||x - target||^2
  double sigma;
  std::size_t evals;
};

// SDS: residual x - D_p(x + n; sigma(t)).
GradResult sds_grad(const Generator& generator, const Vector& theta, const CameraPose& pose, double t,
                    const Denoiser& prior, Rng& rng, const DistillConfig& config);

// VSD: residual D_q(x + n; sigma(t)) - D_p(x + n; sigma(t)) with one shared n.
GradResult vsd_grad(const Generator& generator, const Vector& theta, const CameraPose& pose, double t,
                    const Denoiser& prior, const AuxModel& aux, Rng& rng, const DistillConfig& config);

struct TrajectoryRow {
  std::size_t step = 0;
  std::string stage;
  double t = 0.0;
  double sigma = 0.0;
  std::size_t view = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t denoiser_evals = 0;
  double wall_ms = 0.0;

  bool operator==(const TrajectoryRow&) const = default;
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
  Scene final_scene;
  std::optional<std::string> failure;

  std::size_t total_evals() const;
  bool ok() const { return !failure; }
};

// One APFO target per view: delta = ((sigma_next - sigma) / sigma) * (D_phi - D_p),
// y = sg(x + delta), then K optimizer steps on 0.5 * ||g(theta, c) - y||^2.
struct ApfoLevel {
  double t;
  double sigma;
  double sigma_next;
};

std::vector<TrajectoryRow> apfo_update(const Generator& generator, Scene& scene, const ApfoLevel& level,
                                       std::span<const std::size_t> views, std::span<const ViewTarget> targets,
                                       AuxModel& aux, ParameterOptimizer& optimizer, const DistillConfig& config,
                                       std::size_t first_step);

// Views for one outer step: distinct while the pose list allows it.
std::vector<std::size_t> sample_views(std::size_t available, std::size_t count, Rng& rng);

// Base network for a lora aux: DSM on samples of the view priors, with the
// camera azimuth as an input when the config asks for pose conditioning.
std::shared_ptr<const MlpDenoiser> train_aux_base(std::span<const ViewTarget> targets, std::size_t steps,
                                                  const DistillConfig& config, std::vector<std::size_t> hidden = {64, 64});

// Builds the configured auxiliary model. `lora_base` is required for lora mode.
// Analytic mode mixes the renders at `poses` unless the aux is pose-conditioned.
std::unique_ptr<AuxModel> make_aux_model(const DistillConfig& config,
                                         std::shared_ptr<const MlpDenoiser> lora_base = nullptr,
                                         std::span<const CameraPose> poses = {});

// Full optimization loop. Records every view update; stops with a diagnostic
// row on a non-finite loss.
TrajectoryRecord run_distillation(const Generator& generator, const Scene& initial,
                                  std::span<const ViewTarget> targets, AuxModel& aux, const DistillConfig& config,
                                  std::size_t first_step = 0);

// Number of outer updates a config performs.
std::size_t planned_updates(const DistillConfig& config);

}  // namespace flowdistill

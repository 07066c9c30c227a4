#include "flowdistill/distill.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "flowdistill/error.hpp"

namespace flowdistill {

namespace {

// RNG stream tags; every draw is keyed by (seed, step, tag).
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kViewStream = 2;
constexpr std::uint64_t kTimeStream = 3;
constexpr std::uint64_t kAuxStream = 4;
constexpr std::uint64_t kBaseInitStream = 5;
constexpr std::uint64_t kBaseTrainStream = 6;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start, bool reproducible) {
  if (reproducible) return 0.0;
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::unique_ptr<Denoiser> prior_denoiser(const ViewTarget& target, const DistillConfig& config) {
  if (!target.prior) throw ParameterError("run_distillation: view without prior");
  if (config.label) return std::make_unique<GuidedDenoiser>(target.prior, *config.label, config.guidance);
  return std::make_unique<PriorDenoiser>(target.prior->unconditional());
}

}  // namespace

Method parse_method(std::string_view name) {
  if (name == "sds") return Method::sds;
  if (name == "vsd") return Method::vsd;
  if (name == "apfo") return Method::apfo;
  throw ParameterError("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sds:
      return "sds";
    case Method::vsd:
      return "vsd";
    case Method::apfo:
      return "apfo";
  }
  return "?";
}

TimestepPolicy parse_timestep_policy(std::string_view name) {
  if (name == "random") return TimestepPolicy::random;
  if (name == "annealed") return TimestepPolicy::annealed;
  if (name == "scheduled") return TimestepPolicy::scheduled;
  throw ParameterError("unknown timestep policy '" + std::string(name) + "'");
}

std::string_view to_string(TimestepPolicy p) {
  switch (p) {
    case TimestepPolicy::random:
      return "random";
    case TimestepPolicy::annealed:
      return "annealed";
    case TimestepPolicy::scheduled:
      return "scheduled";
  }
  return "?";
}

AuxMode parse_aux_mode(std::string_view name) {
  if (name == "ideal") return AuxMode::ideal;
  if (name == "lora") return AuxMode::lora;
  if (name == "analytic") return AuxMode::analytic;
  throw ParameterError("unknown aux mode '" + std::string(name) + "'");
}

std::string_view to_string(AuxMode m) {
  switch (m) {
    case AuxMode::ideal:
      return "ideal";
    case AuxMode::lora:
      return "lora";
    case AuxMode::analytic:
      return "analytic";
  }
  return "?";
}

InnerOptimizer parse_inner_optimizer(std::string_view name) {
  if (name == "sgd") return InnerOptimizer::sgd;
  if (name == "adam") return InnerOptimizer::adam;
  throw ParameterError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(InnerOptimizer o) { return o == InnerOptimizer::sgd ? "sgd" : "adam"; }

ParameterOptimizer::ParameterOptimizer(OptimizerConfig config)
    : config_(config), adam_(AdamConfig{config.learning_rate, config.beta1, config.beta2, config.epsilon}) {
  if (!(config.learning_rate > 0.0)) throw ParameterError("optimizer: learning rate must be positive");
}

void ParameterOptimizer::step(Vector& theta, const Vector& grad) {
  if (config_.kind == InnerOptimizer::sgd) {
    theta -= config_.learning_rate * grad;
  } else {
    adam_.step(theta, grad);
  }
}

void DistillConfig::validate() const {
  schedule.validate();
  window.validate();
  if (inner_steps < 1) throw ParameterError("DistillConfig: inner_steps must be >= 1");
  if (method == Method::apfo && policy != TimestepPolicy::scheduled)
    throw ParameterError("DistillConfig: apfo requires the scheduled timestep policy");
  if (method != Method::apfo && policy == TimestepPolicy::scheduled)
    throw ParameterError("DistillConfig: sds/vsd use random or annealed timesteps");
  if (!(t_min > 0.0 && t_max <= 1.0 && t_min < t_max))
    throw ParameterError("DistillConfig: require 0 < t_min < t_max <= 1");
  if (!(aux_scale >= 0.0)) throw ParameterError("DistillConfig: aux_scale must be >= 0");
  if (aux_batch < 1) throw ParameterError("DistillConfig: aux_batch must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ParameterError("DistillConfig: learning rate must be positive");
}

std::vector<ViewTarget> view_targets(const ViewPriorSet& set) {
  std::vector<ViewTarget> out;
  for (const auto& v : set.views) out.push_back({v.pose, single_prior_set(v.prior)});
  return out;
}

std::vector<ViewTarget> shared_prior_targets(std::span<const CameraPose> poses,
                                             std::shared_ptr<const ConditionalPriorSet> prior) {
  std::vector<ViewTarget> out;
  for (const auto& p : poses) out.push_back({p, prior});
  return out;
}

std::shared_ptr<const ConditionalPriorSet> single_prior_set(const GaussianMixturePrior& prior) {
  const std::string label = prior.label().value_or("default");
  return std::make_shared<const ConditionalPriorSet>(
      std::vector<std::pair<std::string, GaussianMixturePrior>>{{label, prior}});
}

AnalyticAuxModel::AnalyticAuxModel(double scale, std::vector<CameraPose> poses)
    : scale_(scale), poses_(std::move(poses)) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw ParameterError("AnalyticAuxModel: scale must be >= 0");
}

Vector AnalyticAuxModel::denoise(const Vector& clean, const Vector& noisy, double sigma, const CameraPose&) const {
  const std::vector<Vector> own{clean};
  const std::vector<Vector>& atoms = renders_.empty() ? own : renders_;
  if (scale_ == 0.0) return empirical_denoise(atoms, noisy, sigma);
  std::vector<MixtureComponent> components;
  for (const auto& r : atoms) components.push_back({1.0, r, scale_});
  return GaussianMixturePrior(std::move(components)).denoise(noisy, sigma);
}

void AnalyticAuxModel::bind(const Generator& generator, const Vector& theta) {
  renders_.clear();
  if (const auto* particles = dynamic_cast<const ParticleGenerator*>(&generator)) {
    for (std::size_t i = 0; i < particles->count(); ++i) {
      CameraPose p;
      p.index = i;
      renders_.push_back(particles->render(theta, p));
    }
    return;
  }
  for (const auto& pose : poses_) renders_.push_back(generator.render(theta, pose));
}

LoraAuxModel::LoraAuxModel(std::shared_ptr<LoraDenoiser> net, bool training, bool pose_conditioned,
                           std::size_t batch, DsmConfig dsm)
    : net_(std::move(net)), training_(training), pose_conditioned_(pose_conditioned), batch_(batch), dsm_(dsm) {
  if (!net_) throw ParameterError("LoraAuxModel: null network");
}

Vector LoraAuxModel::denoise(const Vector&, const Vector& noisy, double sigma, const CameraPose& pose) const {
  if (sigma == 0.0) return noisy;
  Condition c;
  if (pose_conditioned_) c.angle = pose.angle;
  return net_->forward(noisy, sigma, c);
}

std::size_t LoraAuxModel::observe(const Vector& render, const CameraPose& pose, Rng& rng) {
  if (!training_) return 0;
  const std::vector<Vector> batch(batch_, render);
  std::vector<Condition> conds;
  if (pose_conditioned_) conds.assign(batch_, Condition{std::nullopt, pose.angle});
  net_->finetune_step(batch, rng, dsm_, conds);
  return batch_;
}

GradResult sds_grad(const Generator& generator, const Vector& theta, const CameraPose& pose, double t,
                    const Denoiser& prior, Rng& rng, const DistillConfig& config) {
  if (!(t > 0.0 && t <= 1.0)) throw ParameterError("sds_grad: t must lie in (0, 1]");
  const double sigma = sigma_of_t(config.schedule, t);
  if (!(sigma > 0.0)) throw ParameterError("sds_grad: sigma(t) is zero");
  const Vector x = generator.render(theta, pose);
  const Vector noise = normal_vector(rng, x.size(), sigma);
  const Vector residual = x - prior.denoise(x + noise, sigma);
  const double lambda = weighting_value(config.weighting, sigma, config.sigma_data);
  return {lambda * generator.vjp(pose, residual), x - residual, 0.5 * lambda * residual.squaredNorm(), sigma, 1};
}

GradResult vsd_grad(const Generator& generator, const Vector& theta, const CameraPose& pose, double t,
                    const Denoiser& prior, const AuxModel& aux, Rng& rng, const DistillConfig& config) {
  if (!(t > 0.0 && t <= 1.0)) throw ParameterError("vsd_grad: t must lie in (0, 1]");
  const double sigma = sigma_of_t(config.schedule, t);
  if (!(sigma > 0.0)) throw ParameterError("vsd_grad: sigma(t) is zero");
  const Vector x = generator.render(theta, pose);
  const Vector noise = normal_vector(rng, x.size(), sigma);
  const Vector noisy = x + noise;
  const Vector residual = aux.denoise(x, noisy, sigma, pose) - prior.denoise(noisy, sigma);
  const double lambda = weighting_value(config.weighting, sigma, config.sigma_data);
  return {lambda * generator.vjp(pose, residual), x - residual, 0.5 * lambda * residual.squaredNorm(), sigma,
          1 + aux.evals_per_call()};
}

std::size_t TrajectoryRecord::total_evals() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.denoiser_evals;
  return n;
}

std::vector<std::size_t> sample_views(std::size_t available, std::size_t count, Rng& rng) {
  if (available == 0) throw ParameterError("sample_views: no views");
  std::vector<std::size_t> out;
  out.reserve(count);
  std::vector<std::size_t> perm(available);
  while (out.size() < count) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const std::size_t take = std::min(available, count - out.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, available - 1 - i)(rng);
      std::swap(perm[i], perm[j]);
      out.push_back(perm[i]);
    }
  }
  return out;
}

std::vector<TrajectoryRow> apfo_update(const Generator& generator, Scene& scene, const ApfoLevel& level,
                                       std::span<const std::size_t> views, std::span<const ViewTarget> targets,
                                       AuxModel& aux, ParameterOptimizer& optimizer, const DistillConfig& config,
                                       std::size_t first_step) {
  if (!(level.sigma > 0.0) || !(level.sigma_next < level.sigma) || level.sigma_next < 0.0)
    throw ScheduleError("apfo_update: sigma levels must strictly decrease");
  std::vector<TrajectoryRow> rows;
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto start = Clock::now();
    const std::size_t step = first_step + k;
    const ViewTarget& target = targets[views[k]];
    const auto prior = prior_denoiser(target, config);
    Rng noise_rng = make_rng(config.seed, step, kNoiseStream);

    aux.bind(generator, scene.theta);
    const Vector x = generator.render(scene.theta, target.pose);
    const Vector noisy = x + normal_vector(noise_rng, x.size(), level.sigma);
    const Vector delta = ((level.sigma_next - level.sigma) / level.sigma) *
                         (aux.denoise(x, noisy, level.sigma, target.pose) - prior->denoise(noisy, level.sigma));
    const Vector y = x + delta;

    TrajectoryRow row;
    row.step = step;
    row.stage = config.stage;
    row.t = level.t;
    row.sigma = level.sigma;
    row.view = views[k];
    row.loss = 0.5 * delta.squaredNorm();
    row.grad_norm = generator.vjp(target.pose, x - y).norm();
    row.denoiser_evals = 1 + aux.evals_per_call();

    for (std::size_t inner = 0; inner < config.inner_steps; ++inner) {
      const Vector residual = generator.render(scene.theta, target.pose) - y;
      optimizer.step(scene.theta, generator.vjp(target.pose, residual));
    }
    Rng aux_rng = make_rng(config.seed, step, kAuxStream);
    row.denoiser_evals += aux.observe(generator.render(scene.theta, target.pose), target.pose, aux_rng);
    row.wall_ms = elapsed_ms(start, config.reproducible);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::shared_ptr<const MlpDenoiser> train_aux_base(std::span<const ViewTarget> targets, std::size_t steps,
                                                  const DistillConfig& config, std::vector<std::size_t> hidden) {
  if (targets.empty()) throw ParameterError("train_aux_base: no view targets");
  MlpConfig net;
  net.dim = targets.front().prior->dim();
  net.hidden = std::move(hidden);
  net.pose_features = config.pose_conditioned_aux;
  net.sigma_data = config.sigma_data;
  Rng init_rng = make_rng(config.seed, 0, kBaseInitStream);
  auto base = std::make_shared<MlpDenoiser>(net, init_rng);
  const bool posed = config.pose_conditioned_aux;
  const ExampleSource source = [targets, posed](Rng& rng) {
    const auto& t = targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)];
    Condition c;
    if (posed) c.angle = t.pose.angle;
    return TrainingExample{t.prior->unconditional().sample(rng, 1).front(), c};
  };
  Rng train_rng = make_rng(config.seed, 0, kBaseTrainStream);
  train_denoiser(*base, source, steps, config.aux_dsm, train_rng);
  return base;
}

std::unique_ptr<AuxModel> make_aux_model(const DistillConfig& config, std::shared_ptr<const MlpDenoiser> lora_base,
                                         std::span<const CameraPose> poses) {
  switch (config.aux) {
    case AuxMode::ideal:
      return std::make_unique<IdealAuxModel>();
    case AuxMode::analytic: {
      std::vector<CameraPose> atoms;
      if (!config.pose_conditioned_aux) atoms.assign(poses.begin(), poses.end());
      return std::make_unique<AnalyticAuxModel>(config.aux_scale, std::move(atoms));
    }
    case AuxMode::lora: {
      if (!lora_base) throw ParameterError("make_aux_model: lora mode needs a base network");
      Rng rng = make_rng(config.seed, 0, kAuxStream);
      auto net = std::make_shared<LoraDenoiser>(std::move(lora_base), config.lora, rng);
      return std::make_unique<LoraAuxModel>(std::move(net), config.aux_training, config.pose_conditioned_aux,
                                            config.aux_batch, config.aux_dsm);
    }
  }
  throw ParameterError("make_aux_model: unknown mode");
}

std::size_t planned_updates(const DistillConfig& config) {
  const std::size_t levels = window_levels(config.schedule, config.window).size();
  if (levels < 2) throw ParameterError("DistillConfig: window needs at least two noise levels");
  const std::size_t apfo_budget = (levels - 1) * config.window.views_per_step;
  if (config.method == Method::apfo) return apfo_budget;
  return config.total_updates > 0 ? config.total_updates : apfo_budget;
}

TrajectoryRecord run_distillation(const Generator& generator, const Scene& initial,
                                  std::span<const ViewTarget> targets, AuxModel& aux, const DistillConfig& config,
                                  std::size_t first_step) {
  config.validate();
  initial.validate();
  if (targets.empty()) throw ParameterError("run_distillation: no view targets");
  if (static_cast<std::size_t>(initial.theta.size()) != generator.param_dim())
    throw ParameterError("run_distillation: scene does not match the generator");
  for (const auto& target : targets) {
    generator.validate_pose(target.pose);
    if (!target.prior || target.prior->dim() != generator.render_dim())
      throw ParameterError("run_distillation: prior dimension does not match rendered dimension");
  }

  TrajectoryRecord record;
  Scene scene = initial;
  scene.stage = config.stage;
  ParameterOptimizer optimizer(config.optimizer);
  std::size_t step = first_step;

  auto fail = [&](const TrajectoryRow& row, const std::string& why) {
    record.rows.push_back(row);
    record.failure = why + " at step " + std::to_string(row.step);
  };

  if (config.method == Method::apfo) {
    const auto levels = window_levels(config.schedule, config.window);
    if (levels.size() < 2) throw ParameterError("run_distillation: window needs at least two noise levels");
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      Rng view_rng = make_rng(config.seed, first_step + i, kViewStream);
      const auto views = sample_views(targets.size(), config.window.views_per_step, view_rng);
      const ApfoLevel level{levels[i].t, levels[i].sigma, levels[i + 1].sigma};
      auto rows = apfo_update(generator, scene, level, views, targets, aux, optimizer, config, step);
      for (auto& row : rows) {
        if (!std::isfinite(row.loss) || !scene.theta.allFinite()) {
          fail(row, "non-finite loss");
          record.final_scene = scene;
          return record;
        }
        record.rows.push_back(std::move(row));
      }
      step += views.size();
    }
  } else {
    const std::size_t total = planned_updates(config);
    for (std::size_t u = 0; u < total; ++u) {
      const auto start = Clock::now();
      Rng time_rng = make_rng(config.seed, step, kTimeStream);
      double t;
      if (config.policy == TimestepPolicy::random) {
        t = config.t_min + (config.t_max - config.t_min) * uniform01(time_rng);
      } else {
        const double frac = total > 1 ? static_cast<double>(u) / static_cast<double>(total - 1) : 0.0;
        t = config.t_max - (config.t_max - config.t_min) * frac;
      }
      Rng view_rng = make_rng(config.seed, step, kViewStream);
      const std::size_t view = sample_views(targets.size(), 1, view_rng).front();
      const ViewTarget& target = targets[view];
      const auto prior = prior_denoiser(target, config);
      Rng noise_rng = make_rng(config.seed, step, kNoiseStream);
      aux.bind(generator, scene.theta);
      const GradResult g = config.method == Method::sds
                               ? sds_grad(generator, scene.theta, target.pose, t, *prior, noise_rng, config)
                               : vsd_grad(generator, scene.theta, target.pose, t, *prior, aux, noise_rng, config);
      TrajectoryRow row;
      row.step = step;
      row.stage = config.stage;
      row.t = t;
      row.sigma = g.sigma;
      row.view = view;
      row.loss = g.loss;
      row.grad_norm = g.grad.norm();
      row.denoiser_evals = g.evals;
      if (!std::isfinite(row.loss) || !g.grad.allFinite()) {
        fail(row, "non-finite loss");
        record.final_scene = scene;
        return record;
      }
      optimizer.step(scene.theta, g.grad);
      if (config.method == Method::vsd) {
        Rng aux_rng = make_rng(config.seed, step, kAuxStream);
        row.denoiser_evals += aux.observe(generator.render(scene.theta, target.pose), target.pose, aux_rng);
      }
      row.wall_ms = elapsed_ms(start, config.reproducible);
      record.rows.push_back(std::move(row));
      ++step;
    }
  }
  record.final_scene = scene;
  return record;
}

}  // namespace flowdistill

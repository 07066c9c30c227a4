#include "flowdistill/cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "flowdistill/error.hpp"
#include "flowdistill/parallel.hpp"

namespace flowdistill::cli {

GaussianMixturePrior gauss1d_prior(double mean, double scale) {
  return GaussianMixturePrior::gaussian(Vector::Constant(1, mean), scale, "gauss1d");
}

GaussianMixturePrior gmm2d_prior(double separation, double scale) {
  Vector a(2), b(2);
  a << -0.5 * separation, 0.0;
  b << 0.5 * separation, 0.0;
  return GaussianMixturePrior({{0.5, a, scale}, {0.5, b, scale}}, "gmm2d");
}

Scene benchmark_truth(GridShape shape, std::size_t variant, std::size_t variants) {
  if (shape.size() == 0) throw ParameterError("benchmark_truth: empty grid");
  if (variants == 0 || variant >= variants) throw ParameterError("benchmark_truth: variant out of range");
  Scene s = Scene::grid(shape);
  double bx = 0.0, by = 0.0;
  if (variants > 1) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(variant) / static_cast<double>(variants);
    bx = 0.25 * std::cos(a);
    by = 0.25 * std::sin(a);
  }
  for (std::size_t r = 0; r < shape.height; ++r) {
    for (std::size_t c = 0; c < shape.width; ++c) {
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(shape.width) - 0.5;
      const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(shape.height) - 0.5;
      const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
      s.theta[static_cast<Eigen::Index>(r * shape.width + c)] = 0.5 + 0.4 * std::exp(-d2 / 0.05) + 0.2 * x;
    }
  }
  return s;
}

Benchmark make_grid_benchmark(GridShape shape, std::size_t views, double scale) {
  Benchmark b;
  b.generator = std::make_unique<MultiViewGenerator>(shape);
  b.truth = benchmark_truth(shape);
  b.poses = uniform_poses(views);
  b.scale = scale;
  b.targets = view_targets(make_benchmark(*b.generator, b.truth, b.poses, scale));
  return b;
}

LabelBenchmark make_label_benchmark(GridShape shape, std::size_t views, std::size_t labels, double scale) {
  if (labels < 2) throw ParameterError("make_label_benchmark: need at least two labels");
  LabelBenchmark b;
  b.generator = std::make_unique<MultiViewGenerator>(shape);
  b.poses = uniform_poses(views);
  b.scale = scale;
  for (std::size_t k = 0; k < labels; ++k) {
    b.labels.push_back("label" + std::to_string(k));
    b.truths.push_back(benchmark_truth(shape, k, labels));
  }
  for (const auto& pose : b.poses) {
    std::vector<std::pair<std::string, GaussianMixturePrior>> conds;
    for (std::size_t k = 0; k < labels; ++k)
      conds.emplace_back(b.labels[k], GaussianMixturePrior::gaussian(b.generator->render(b.truths[k].theta, pose),
                                                                      scale, b.labels[k]));
    b.targets.push_back({pose, std::make_shared<const ConditionalPriorSet>(std::move(conds))});
  }
  return b;
}

double resolved_prior_scale(const Config& cfg) {
  if (cfg.str("prior.scale") != "auto") {
    const double s = cfg.num("prior.scale");
    if (!(s > 0.0)) throw ConfigError("prior.scale must be positive");
    return s;
  }
  const std::string preset = cfg.str("prior.preset");
  return preset == "gauss1d" || preset == "gmm2d" ? 0.5 : 0.1;
}

NoiseSchedule schedule_from(const Config& cfg) {
  NoiseSchedule s;
  s.sigma_min = cfg.num("schedule.sigma_min");
  s.sigma_max = cfg.num("schedule.sigma_max");
  s.rho = cfg.num("schedule.rho");
  s.n_steps = cfg.count("schedule.n_steps");
  s.validate();
  return s;
}

std::string window_name(const Config& cfg) { return cfg.str("window.preset"); }

StageWindow window_from(const Config& cfg) {
  const std::string name = window_name(cfg);
  StageWindow w = name == "full" ? StageWindow{} : stage_preset(name);
  if (cfg.str("window.t_start") != "auto") w.t_start = cfg.num("window.t_start");
  if (cfg.str("window.t_end") != "auto") w.t_end = cfg.num("window.t_end");
  if (cfg.str("window.views") != "auto") w.views_per_step = cfg.count("window.views");
  if (cfg.str("window.spacing") != "auto") w.spacing = cfg.count("window.spacing");
  w.validate();
  return w;
}

DistillConfig distill_config_from(const Config& cfg) {
  DistillConfig d;
  d.method = parse_method(cfg.str("method"));
  const std::string policy = cfg.str("distill.policy");
  if (policy == "auto")
    d.policy = d.method == Method::apfo ? TimestepPolicy::scheduled : TimestepPolicy::random;
  else
    d.policy = parse_timestep_policy(policy);
  d.weighting = parse_weighting(cfg.str("distill.weighting"));
  d.guidance = cfg.num("distill.guidance");
  if (const std::string label = cfg.str("distill.label"); !label.empty()) d.label = label;
  d.aux = parse_aux_mode(cfg.str("distill.aux"));
  d.aux_scale = cfg.str("distill.aux_scale") == "auto" ? resolved_prior_scale(cfg) : cfg.num("distill.aux_scale");
  d.aux_training = cfg.flag("distill.aux_training");
  d.pose_conditioned_aux = cfg.flag("distill.pose_conditioned_aux");
  d.aux_batch = cfg.count("distill.aux_batch");
  d.inner_steps = cfg.count("distill.inner_steps");
  d.optimizer.kind = parse_inner_optimizer(cfg.str("distill.optimizer"));
  d.optimizer.learning_rate = cfg.num("distill.lr");
  d.t_min = cfg.num("distill.t_min");
  d.t_max = cfg.num("distill.t_max");
  d.total_updates = cfg.count("distill.total_updates");
  d.schedule = schedule_from(cfg);
  d.window = window_from(cfg);
  d.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  d.reproducible = cfg.flag("reproducible");
  d.stage = window_name(cfg);
  d.validate();
  return d;
}

TrajectoryRecord distill_on(const Generator& generator, const Scene& initial, std::span<const ViewTarget> targets,
                            const DistillConfig& cfg, std::size_t aux_pretrain_steps) {
  std::shared_ptr<const MlpDenoiser> base;
  if (cfg.aux == AuxMode::lora) base = train_aux_base(targets, aux_pretrain_steps, cfg);
  std::vector<CameraPose> poses;
  for (const auto& t : targets) poses.push_back(t.pose);
  auto aux = make_aux_model(cfg, base, poses);
  return run_distillation(generator, initial, targets, *aux, cfg);
}

DistillConfig compare_config(const DistillConfig& base, const std::string& method, OptimizerConfig score_optimizer) {
  DistillConfig cfg = base;
  if (method == "apfo") {
    cfg.method = Method::apfo;
    cfg.policy = TimestepPolicy::scheduled;
    return cfg;
  }
  if (method == "sds") {
    cfg.method = Method::sds;
    cfg.policy = TimestepPolicy::random;
  } else if (method == "vsd") {
    cfg.method = Method::vsd;
    cfg.policy = TimestepPolicy::random;
  } else if (method == "vsd-anneal") {
    cfg.method = Method::vsd;
    cfg.policy = TimestepPolicy::annealed;
  } else {
    throw ParameterError("unknown compare method '" + method + "'");
  }
  cfg.optimizer = score_optimizer;
  return cfg;
}

std::vector<CompareRun> run_compare(const Benchmark& bench, const DistillConfig& base,
                                    const std::vector<std::string>& methods, const std::vector<std::uint64_t>& seeds,
                                    OptimizerConfig score_optimizer, std::size_t aux_pretrain_steps) {
  if (methods.empty() || seeds.empty()) throw ParameterError("run_compare: no methods or seeds");
  // The apfo budget fixes the number of updates for every method.
  DistillConfig apfo = compare_config(base, "apfo", score_optimizer);
  const std::size_t budget = planned_updates(apfo);

  std::vector<CompareRun> runs;
  for (const auto& m : methods)
    for (auto s : seeds) runs.push_back({m, s, {}, {}, {}, 0.0});
  std::vector<DistillConfig> configs;
  for (const auto& r : runs) {
    DistillConfig cfg = compare_config(base, r.method, score_optimizer);
    cfg.seed = r.seed;
    cfg.total_updates = budget;
    cfg.stage = r.method;
    configs.push_back(cfg);
  }
  const Scene initial = Scene::grid(bench.truth.shape);
  parallel_for(runs.size(), [&](std::size_t i) {
    CompareRun& run = runs[i];
    run.record = distill_on(*bench.generator, initial, bench.targets, configs[i], aux_pretrain_steps);
    std::vector<double> loss, grad;
    for (const auto& row : run.record.rows) {
      loss.push_back(row.loss);
      grad.push_back(row.grad_norm);
    }
    if (loss.size() >= 3 && run.record.ok()) {
      run.loss_trend = trend_stats(loss);
      run.grad_trend = trend_stats(grad);
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      run.loss_trend = run.grad_trend = {nan, nan};
    }
    run.relative_error = scene_error(run.record.final_scene.theta, bench.truth.theta).relative_l2;
  });
  return runs;
}

RetrievalResult run_retrieval(const LabelBenchmark& bench, const DistillConfig& base, std::size_t aux_pretrain_steps) {
  RetrievalResult result;
  result.scenes.resize(bench.labels.size());
  std::vector<DistillConfig> configs;
  for (std::size_t k = 0; k < bench.labels.size(); ++k) {
    DistillConfig cfg = base;
    cfg.label = bench.labels[k];
    cfg.seed = derive_seed(base.seed, k);
    cfg.stage = bench.labels[k];
    configs.push_back(cfg);
  }
  const Scene initial = Scene::grid(bench.truths.front().shape);
  parallel_for(bench.labels.size(), [&](std::size_t k) {
    const auto record = distill_on(*bench.generator, initial, bench.targets, configs[k], aux_pretrain_steps);
    if (!record.ok()) throw NumericalError("retrieval: distillation failed for " + bench.labels[k], 0);
    result.scenes[k] = {bench.labels[k], record.final_scene.theta};
  });
  std::vector<std::shared_ptr<const ConditionalPriorSet>> view_priors;
  for (const auto& t : bench.targets) view_priors.push_back(t.prior);
  for (const auto& scene : result.scenes)
    result.predicted.push_back(classify_scene(scene.theta, view_priors, *bench.generator, bench.poses));
  result.precision = retrieval_precision(result.scenes, view_priors, *bench.generator, bench.poses);
  return result;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ParameterError("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace flowdistill::cli
